//! Render a finished run into a directory of plain artifacts: CSV tables, a
//! JSON summary, and plot-ready data under `plotdata/`.
//!
//! Nothing written here depends on where or when the run happened — no
//! paths, hostnames, or wall-clock timestamps — so the same scenario and
//! seed produce byte-identical directories on every machine.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use qstt_core::keymgmt::FeasibilityReport;
use qstt_core::orbit::{Pass, PassStats};
use qstt_core::pipeline::transfer_log_csv;
use qstt_core::qkdlink::qber_of_batch;
use qstt_core::timebase::{format_utc, unix_to_mjd};
use qstt_core::timetransfer::{DriftFit, OffsetSeries};

use crate::runner::{
    OrbitStage, PipelineReport, StationReport, TimeTransferReport, UsecaseReport,
};

/// Grid points to skip between rows of the transmittance plot — the full
/// 0.02° grid is overkill for plotting, 0.5° reads fine.
const PLOT_EVERY: usize = 25;

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

// --- csv tables -------------------------------------------------------------

/// `passes.csv`: one row per pass, stations in the given order.
pub fn passes_csv<'a>(
    entries: impl IntoIterator<Item = (String, &'a [Pass])>,
    step_s: f64,
) -> String {
    let mut out = String::from("station,start_utc,end_utc,duration_s,max_elevation_deg\n");
    for (label, passes) in entries {
        for p in passes {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.3}",
                label,
                format_utc(p.start_unix_s),
                format_utc(p.end_unix_s),
                p.duration_s(step_s),
                p.max_elevation_deg()
            );
        }
    }
    out
}

/// `blocks.csv`: every closed finite-key block per station.
pub fn blocks_csv(stations: &[StationReport]) -> Result<String> {
    let mut out = String::from(
        "station,block_id,n_z,n_x,qber_z,qber_x,secret_bits,first_pass,last_pass\n",
    );
    for st in stations {
        for b in &st.blocks {
            let qber = qber_of_batch(&b.counts).context("block QBER")?;
            let _ = writeln!(
                out,
                "{},{},{:.3},{:.3},{:.6},{:.6},{},{},{}",
                st.site.label(),
                b.id,
                b.counts.n_z(),
                b.counts.n_x(),
                qber.qber_z,
                qber.qber_x,
                b.secret_bits.unwrap_or(0),
                b.first_pass,
                b.last_pass
            );
        }
    }
    Ok(out)
}

fn series_in_order(tt: &TimeTransferReport) -> [&OffsetSeries; 3] {
    [&tt.ma_vs_gnss, &tt.op_vs_gnss, &tt.op_vs_ma]
}

/// `offsets.csv`: the two facility-vs-GNSS series and their difference.
pub fn offsets_csv(tt: &TimeTransferReport) -> String {
    let mut out = String::from("epoch_utc,mjd,station,delta_t_ns,n_sats\n");
    for series in series_in_order(tt) {
        for s in &series.samples {
            let _ = writeln!(
                out,
                "{},{:.8},{},{:.6},{}",
                format_utc(s.t_unix_s),
                unix_to_mjd(s.t_unix_s),
                series.label,
                s.offset_s * 1e9,
                s.n_sats
            );
        }
    }
    out
}

/// One `drift_*.csv` body: a daily least-squares slope per row.
pub fn drift_csv(fits: &[(i64, DriftFit)]) -> String {
    let mut out = String::from("mjd,slope_ns_per_day,sigma\n");
    for (mjd, fit) in fits {
        let _ = writeln!(out, "{},{:.6},{:.6}", mjd, fit.slope_ns_per_day, fit.sigma_ns_per_day);
    }
    out
}

fn drift_filename(series_label: &str) -> String {
    match series_label {
        "MA" => "drift_ma_gnss.csv".to_string(),
        "OP" => "drift_op_gnss.csv".to_string(),
        "OP-MA" => "drift_op_ma.csv".to_string(),
        other => format!("drift_{}.csv", other.to_lowercase().replace('-', "_")),
    }
}

// --- plot data --------------------------------------------------------------

/// `plotdata/transmittance_vs_elevation.csv`: the channel budget terms on a
/// 0.5° elevation comb per station.
pub fn transmittance_csv(stations: &[StationReport]) -> String {
    let mut out = String::from("station,elevation_deg,eta_a,eta_g,eta_f,eta_0,eta\n");
    for st in stations {
        for sample in st.channel_grid.iter().step_by(PLOT_EVERY) {
            let _ = writeln!(
                out,
                "{},{:.2},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                st.site.label(),
                sample.elevation_deg,
                sample.eta_a,
                sample.eta_g,
                sample.eta_f,
                sample.eta_0,
                sample.eta
            );
        }
    }
    out
}

/// `plotdata/offsets_vs_time.csv`: the offset series keyed for plotting.
pub fn offsets_plot_csv(tt: &TimeTransferReport) -> String {
    let mut out = String::from("mjd,series,delta_t_ns\n");
    for series in series_in_order(tt) {
        for s in &series.samples {
            let _ = writeln!(
                out,
                "{:.8},{},{:.6}",
                unix_to_mjd(s.t_unix_s),
                series.label,
                s.offset_s * 1e9
            );
        }
    }
    out
}

/// `plotdata/skr_vs_day.csv`: secret bits banked per simulated day, a block
/// counting toward the day its closing pass ended in.
pub fn skr_by_day_csv(report: &UsecaseReport) -> String {
    let mut out = String::from("day,station,secret_bits,skr_bps\n");
    for st in &report.stations {
        let mut by_day: BTreeMap<u64, u64> = BTreeMap::new();
        for b in &st.blocks {
            let end = st.passes[b.last_pass as usize].end_unix_s;
            let day = ((end - report.start_unix_s) / 86_400.0).floor() as u64 + 1;
            *by_day.entry(day).or_insert(0) += b.secret_bits.unwrap_or(0);
        }
        for (day, bits) in by_day {
            let _ = writeln!(
                out,
                "{},{},{},{:.6}",
                day,
                st.site.label(),
                bits,
                bits as f64 / 86_400.0
            );
        }
    }
    out
}

// --- summary ----------------------------------------------------------------

#[derive(Serialize)]
struct ScenarioMeta<'a> {
    name: &'a str,
    seed: u64,
    deterministic: bool,
    horizon_days: f64,
    step_s: f64,
}

#[derive(Serialize)]
struct StationSummary<'a> {
    passes: &'a PassStats,
    blocks_closed: usize,
    total_secret_bits: u64,
    mean_skr_bps: f64,
    p_overcast: f64,
    weather_derated_skr_bps: f64,
    eta_f_interpretation: &'a str,
    atmosphere_model: &'a str,
    feasibility: &'a FeasibilityReport,
}

#[derive(Serialize)]
struct DailyFit {
    mjd: i64,
    #[serde(flatten)]
    fit: DriftFit,
}

#[derive(Serialize)]
struct SeriesSummary {
    n_samples: usize,
    daily_drift: Vec<DailyFit>,
}

#[derive(Serialize)]
struct TimeTransferSummary {
    series: BTreeMap<String, SeriesSummary>,
    clock_data_records: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct PipelineSummary {
    ticks: usize,
    successes: usize,
    failures: usize,
    relayed_bits_per_site: u64,
    sender_session_bits: u64,
    receiver_session_bits: u64,
    stores_conserved: bool,
}

#[derive(Serialize)]
struct Summary<'a> {
    scenario: ScenarioMeta<'a>,
    stations: BTreeMap<&'a str, StationSummary<'a>>,
    timetransfer: TimeTransferSummary,
    pipeline: PipelineSummary,
}

/// `summary.json`: the headline numbers of every stage.
pub fn summary_json(report: &UsecaseReport) -> Result<String> {
    let mut stations = BTreeMap::new();
    for st in &report.stations {
        stations.insert(
            st.site.label(),
            StationSummary {
                passes: &st.stats,
                blocks_closed: st.skr.blocks_closed,
                total_secret_bits: st.skr.total_secret_bits,
                mean_skr_bps: st.skr.mean_skr_bps,
                p_overcast: st.p_overcast,
                weather_derated_skr_bps: st.derated_skr_bps,
                eta_f_interpretation: &st.skr.eta_f_interpretation,
                atmosphere_model: &st.skr.atmosphere_model,
                feasibility: &st.feasibility,
            },
        );
    }
    let tt = &report.timetransfer;
    let mut series = BTreeMap::new();
    for (label, fits) in &tt.drift {
        let n_samples = series_in_order(tt)
            .iter()
            .find(|s| &s.label == label)
            .map(|s| s.samples.len())
            .unwrap_or(0);
        series.insert(
            label.clone(),
            SeriesSummary {
                n_samples,
                daily_drift: fits.iter().map(|(mjd, fit)| DailyFit { mjd: *mjd, fit: *fit }).collect(),
            },
        );
    }
    let clock_data_records =
        tt.records.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let pipe = &report.pipeline;
    let summary = Summary {
        scenario: ScenarioMeta {
            name: &report.scenario_name,
            seed: report.seed,
            deterministic: report.deterministic,
            horizon_days: report.horizon_days,
            step_s: report.step_s,
        },
        stations,
        timetransfer: TimeTransferSummary { series, clock_data_records },
        pipeline: PipelineSummary {
            ticks: pipe.run.ticks.len(),
            successes: pipe.run.successes(),
            failures: pipe.run.ticks.len() - pipe.run.successes(),
            relayed_bits_per_site: pipe.relayed_bits,
            sender_session_bits: pipe.sender_session_bits,
            receiver_session_bits: pipe.receiver_session_bits,
            stores_conserved: pipe.stores_conserved,
        },
    };
    let mut text = serde_json::to_string_pretty(&summary).context("summary serialization")?;
    text.push('\n');
    Ok(text)
}

// --- stage writers ------------------------------------------------------------

/// Write `passes.csv` for a bare orbit run.
pub fn write_orbit(dir: &Path, orbit: &OrbitStage, step_s: f64) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let entries = orbit
        .iter()
        .map(|(name, rep)| (name.to_uppercase(), rep.passes.as_slice()));
    write_file(dir, "passes.csv", &passes_csv(entries, step_s))
}

/// Write the key-generation artifacts: `blocks.csv` and the channel plot.
pub fn write_stations(dir: &Path, stations: &[StationReport]) -> Result<()> {
    fs::create_dir_all(dir.join("plotdata"))
        .with_context(|| format!("creating {}", dir.display()))?;
    write_file(dir, "blocks.csv", &blocks_csv(stations)?)?;
    write_file(
        dir,
        "plotdata/transmittance_vs_elevation.csv",
        &transmittance_csv(stations),
    )
}

/// Write the clock-comparison artifacts: offsets, daily drift, plots.
pub fn write_timetransfer(dir: &Path, tt: &TimeTransferReport) -> Result<()> {
    fs::create_dir_all(dir.join("plotdata"))
        .with_context(|| format!("creating {}", dir.display()))?;
    write_file(dir, "offsets.csv", &offsets_csv(tt))?;
    for (label, fits) in &tt.drift {
        write_file(dir, &drift_filename(label), &drift_csv(fits))?;
    }
    write_file(dir, "plotdata/offsets_vs_time.csv", &offsets_plot_csv(tt))
}

/// Write the transfer artifacts: the key ledger and the tick log.
pub fn write_pipeline(dir: &Path, pipeline: &PipelineReport) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_file(dir, "ledger.csv", &pipeline.ledger_csv)?;
    write_file(dir, "transfer_log.csv", &transfer_log_csv(&pipeline.run.ticks))
}

/// Write every artifact of a full use-case run.
pub fn write_all(dir: &Path, report: &UsecaseReport) -> Result<()> {
    fs::create_dir_all(dir.join("plotdata"))
        .with_context(|| format!("creating {}", dir.display()))?;
    let entries = report
        .stations
        .iter()
        .map(|st| (st.site.label().to_string(), st.passes.as_slice()))
        .chain(
            report
                .extra_passes
                .iter()
                .map(|(name, rep)| (name.to_uppercase(), rep.passes.as_slice())),
        );
    write_file(dir, "passes.csv", &passes_csv(entries, report.step_s))?;
    write_file(dir, "blocks.csv", &blocks_csv(&report.stations)?)?;
    write_file(dir, "offsets.csv", &offsets_csv(&report.timetransfer))?;
    for (label, fits) in &report.timetransfer.drift {
        write_file(dir, &drift_filename(label), &drift_csv(fits))?;
    }
    write_file(dir, "ledger.csv", &report.pipeline.ledger_csv)?;
    write_file(
        dir,
        "transfer_log.csv",
        &transfer_log_csv(&report.pipeline.run.ticks),
    )?;
    write_file(dir, "summary.json", &summary_json(report)?)?;
    write_file(
        dir,
        "plotdata/transmittance_vs_elevation.csv",
        &transmittance_csv(&report.stations),
    )?;
    write_file(
        dir,
        "plotdata/offsets_vs_time.csv",
        &offsets_plot_csv(&report.timetransfer),
    )?;
    write_file(dir, "plotdata/skr_vs_day.csv", &skr_by_day_csv(report))
}

// --- tests ---------------------------------------------------------------
