//! Black-box checks of the `qstt` binary: exit codes, error wording, and the
//! artifact set a full run leaves behind.

use std::path::Path;
use std::process::{Command, Output};

fn qstt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qstt"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn shipped(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

// --- validate-scenario ----------------------------------------------------------

#[test]
fn every_shipped_scenario_validates() {
    for name in [
        "paper-baseline.toml",
        "paper-baseline-swapped-fov.toml",
        "smoke-1day.toml",
    ] {
        let out = qstt(&["validate-scenario", "--scenario", &shipped(name)]);
        assert_eq!(exit_code(&out), 0, "{name} should validate: {}", stderr_of(&out));
        let echoed = String::from_utf8_lossy(&out.stdout);
        assert!(
            echoed.contains("[sim]") && echoed.contains("[stations"),
            "{name} echo should be normalized TOML, got:\n{echoed}"
        );
    }
    for builtin in ["paper-baseline", "paper-baseline-swapped-fov", "smoke-1day"] {
        let out = qstt(&["validate-scenario", "--scenario", builtin]);
        assert_eq!(exit_code(&out), 0, "built-in {builtin} should resolve");
    }
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, "[sim]\nduraton_days = 5\n").expect("write scenario");
    let out = qstt(&["validate-scenario", "--scenario", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2, "unknown key is a scenario error");
    assert!(
        stderr_of(&out).contains("duraton_days"),
        "message should name the offending key, got: {}",
        stderr_of(&out)
    );
}

#[test]
fn missing_scenario_files_are_a_scenario_error() {
    let out = qstt(&["validate-scenario", "--scenario", "/nonexistent/nowhere.toml"]);
    assert_eq!(exit_code(&out), 2);
    assert!(!stderr_of(&out).is_empty(), "a silent failure helps nobody");
}

#[test]
fn out_of_range_values_are_rejected_by_field() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("zero-step.toml");
    std::fs::write(&path, "[sim]\nstep_s = 0.0\n").expect("write scenario");
    let out = qstt(&["validate-scenario", "--scenario", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2, "zero step is a scenario error");
    assert!(
        stderr_of(&out).contains("step_s"),
        "message should name the field, got: {}",
        stderr_of(&out)
    );
}

// --- simulation commands ----------------------------------------------------------

#[test]
fn run_usecase_writes_the_full_artifact_set() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = qstt(&[
        "run-usecase",
        "--scenario",
        "smoke-1day",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "smoke run should succeed: {}", stderr_of(&out));
    for name in [
        "passes.csv",
        "blocks.csv",
        "offsets.csv",
        "drift_ma_gnss.csv",
        "drift_op_gnss.csv",
        "drift_op_ma.csv",
        "ledger.csv",
        "transfer_log.csv",
        "summary.json",
        "plotdata/transmittance_vs_elevation.csv",
        "plotdata/offsets_vs_time.csv",
        "plotdata/skr_vs_day.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "{name} should exist after a run");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("report written to"),
        "digest should say where the report went, got:\n{stdout}"
    );
}

#[test]
fn simulate_orbit_emits_the_pass_table() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = qstt(&[
        "simulate-orbit",
        "--scenario",
        "smoke-1day",
        "--output",
        dir.path().to_str().unwrap(),
        "--step",
        "30",
    ]);
    assert_eq!(exit_code(&out), 0, "orbit run should succeed: {}", stderr_of(&out));
    let passes = std::fs::read_to_string(dir.path().join("passes.csv")).expect("pass table");
    assert!(
        passes.starts_with("station,start_utc,end_utc,duration_s,max_elevation_deg"),
        "pass table should carry its header, got: {}",
        passes.lines().next().unwrap_or_default()
    );
    assert!(passes.lines().count() > 1, "a day of orbits should produce passes");
}
