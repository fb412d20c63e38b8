//! `qstt` — scenario-driven simulator for satellite-QKD-secured time
//! transfer: orbit passes, downlink key generation, GNSS clock comparison,
//! and the encrypted clock-data pipeline gluing them together.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qstt_cli::report;
use qstt_cli::runner::{self, StationReport};
use qstt_cli::scenario::{load_scenario, Scenario, ScenarioError, SITES};

#[derive(Parser)]
#[command(
    name = "qstt",
    version,
    about = "Simulate a satellite-QKD-secured time-transfer service between two timing facilities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the orbit and tabulate station passes.
    SimulateOrbit(RunArgs),
    /// Run the downlink key-generation chain for both sites.
    SimulateQkd(RunArgs),
    /// Run the GNSS all-in-view clock-comparison campaign.
    SimulateTimetransfer(RunArgs),
    /// Run the whole use case and write every artifact.
    RunUsecase(RunArgs),
    /// Parse, validate, and echo a scenario in normalized TOML.
    ValidateScenario(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (.toml or .json) or a built-in name
    /// (paper-baseline, paper-baseline-swapped-fov, smoke-1day).
    #[arg(long)]
    scenario: Option<String>,

    /// Output directory (default: out/<scenario name>).
    #[arg(long)]
    output: Option<PathBuf>,

    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the orbit sampling step, seconds.
    #[arg(long)]
    step: Option<f64>,

    /// Force exact-expectation detection statistics regardless of the
    /// scenario's setting.
    #[arg(long)]
    deterministic: bool,
}

/// Scenario problems exit with 2, runtime failures with 3.
enum Failure {
    Scenario(ScenarioError),
    Runtime(anyhow::Error),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Scenario(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Scenario(e)) => {
            eprintln!("scenario error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

/// Load the scenario named by the arguments and apply command-line
/// overrides, re-validating afterwards.
fn load(args: &RunArgs) -> Result<Scenario, ScenarioError> {
    let mut s = match &args.scenario {
        Some(arg) => load_scenario(arg)?,
        None => Scenario::baseline(),
    };
    if let Some(seed) = args.seed {
        s.sim.seed = seed;
    }
    if let Some(step) = args.step {
        s.sim.step_s = step;
    }
    if args.deterministic {
        s.sim.deterministic = true;
    }
    if let Some(output) = &args.output {
        s.sim.output = Some(output.clone());
    }
    s.validated(None)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::ValidateScenario(args) => {
            let s = load(&args)?;
            // round-trip through a value tree so scalar keys always precede
            // sub-tables, whatever the struct field order says
            let normalized = toml::Value::try_from(&s)
                .and_then(|v| toml::to_string_pretty(&v))
                .map_err(|e| Failure::Runtime(anyhow::Error::new(e)))?;
            print!("{normalized}");
            Ok(())
        }
        Command::SimulateOrbit(args) => {
            let s = load(&args)?;
            let dir = s.output_dir();
            let orbit = runner::run_orbit_stage(&s)?;
            report::write_orbit(&dir, &orbit, s.sim.step_s)?;
            for (name, rep) in &orbit {
                println!(
                    "{}: {} passes ({:.2}/day), {:.2} min/day mean contact, {:.2} min mean pass",
                    name.to_uppercase(),
                    rep.stats.pass_count,
                    rep.stats.passes_per_day,
                    rep.stats.mean_minutes_per_day,
                    rep.stats.mean_pass_minutes,
                );
            }
            println!("wrote {}", dir.join("passes.csv").display());
            Ok(())
        }
        Command::SimulateQkd(args) => {
            let s = load(&args)?;
            s.require_both_sites()?;
            let dir = s.output_dir();
            let mut orbit = runner::run_orbit_stage(&s)?;
            let mut stations = Vec::new();
            for site in SITES {
                let rep = orbit.remove(site.key()).expect("sites checked above");
                stations.push(runner::run_station_qkd(&s, site, rep.passes, rep.stats)?);
            }
            report::write_stations(&dir, &stations)?;
            for st in &stations {
                print_station_digest(st);
            }
            println!("wrote {}", dir.join("blocks.csv").display());
            Ok(())
        }
        Command::SimulateTimetransfer(args) => {
            let s = load(&args)?;
            s.require_both_sites()?;
            let dir = s.output_dir();
            let tt = runner::run_timetransfer_stage(&s)?;
            report::write_timetransfer(&dir, &tt)?;
            for (label, fits) in &tt.drift {
                for (mjd, fit) in fits {
                    println!(
                        "{label}, MJD {mjd}: {:+.3} ± {:.3} ns/day over {} epochs",
                        fit.slope_ns_per_day, fit.sigma_ns_per_day, fit.n_samples,
                    );
                }
            }
            println!("wrote {}", dir.join("offsets.csv").display());
            Ok(())
        }
        Command::RunUsecase(args) => {
            let s = load(&args)?;
            s.require_both_sites()?;
            let dir = s.output_dir();
            let rep = runner::run_usecase(&s)?;
            report::write_all(&dir, &rep)?;
            for st in &rep.stations {
                print_station_digest(st);
            }
            println!(
                "transfer loop: {}/{} ticks verified, {} key bits drawn per side",
                rep.pipeline.run.successes(),
                rep.pipeline.run.ticks.len(),
                rep.pipeline.sender_session_bits,
            );
            println!("report written to {}", dir.display());
            Ok(())
        }
    }
}

fn print_station_digest(st: &StationReport) {
    println!(
        "{}: {} passes ({:.2}/day), {} blocks, {} secret bits, mean {:.1} bit/s \
         ({:.1} bit/s weather-derated), demand {}",
        st.site.label(),
        st.stats.pass_count,
        st.stats.passes_per_day,
        st.skr.blocks_closed,
        st.skr.total_secret_bits,
        st.skr.mean_skr_bps,
        st.derated_skr_bps,
        if st.feasibility.feasible { "met" } else { "not met" },
    );
}
