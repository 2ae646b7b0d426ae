//! Experiment runner CLI: validate scenarios, execute single runs, and
//! sweep a parameter over a list of values.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rtps::experiment::{self, SweepParam};
use rtps::scenario::Scenario;
use rtps::sim::Variant;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "rtps", about = "Socially-aware transport simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a scenario file parses and validates.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Run one scenario and write summary and time-series CSVs.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's variant (rtps, delack2, dca3, daap4).
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one parameter over a list of values with repetitions.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// One of: hops, connections, loss.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 3,6,9,12,15.
        #[arg(long)]
        values: String,
        /// Repetitions per value, each with a derived seed.
        #[arg(long, default_value_t = 1)]
        reps: u32,
        /// Override the scenario's variant for every run.
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| format!("unknown variant '{s}' (rtps, delack2, dca3, daap4)"))
}

fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    let values: Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("cannot parse values list '{s}'")),
    }
}

fn load(path: &Path) -> Result<Scenario, ExitCode> {
    Scenario::load(path).map_err(|e| {
        eprintln!("scenario error: {e}");
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn run() -> Result<(), ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { scenario } => {
            let sc = load(&scenario)?;
            println!(
                "ok: {} ({} flows, {} hops, variant {}, duration {}s)",
                sc.name,
                sc.flows.len(),
                sc.topology.hops,
                sc.variant.label(),
                sc.duration
            );
            Ok(())
        }
        Command::Run {
            scenario,
            seed,
            variant,
            out,
        } => {
            let sc = load(&scenario)?;
            let variant = variant
                .as_deref()
                .map(parse_variant)
                .transpose()
                .map_err(|e| {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_VALIDATION)
                })?;
            let report = experiment::run_scenario(&sc, seed, variant).map_err(|e| {
                eprintln!("run failed: {e}");
                ExitCode::from(EXIT_RUNTIME)
            })?;
            experiment::emit_run(&report, &out).map_err(|e| {
                eprintln!("cannot write outputs: {e}");
                ExitCode::from(EXIT_RUNTIME)
            })?;
            println!(
                "{} variant={} seed={} goodput={:.1}kbps mean_latency={:.1}ms ack_overhead={:.3} retx_ratio={:.4}",
                report.scenario,
                report.variant.label(),
                report.seed,
                report.total_goodput_bps / 1000.0,
                report.mean_latency_s * 1000.0,
                report.ack_overhead,
                report.coordination_overhead
            );
            Ok(())
        }
        Command::Sweep {
            scenario,
            param,
            values,
            reps,
            variant,
            out,
        } => {
            let sc = load(&scenario)?;
            let param = SweepParam::parse(&param).ok_or_else(|| {
                eprintln!("unknown sweep parameter '{param}' (hops, connections, loss)");
                ExitCode::from(EXIT_VALIDATION)
            })?;
            let values = parse_values(&values).map_err(|e| {
                eprintln!("{e}");
                ExitCode::from(EXIT_VALIDATION)
            })?;
            let variant = variant
                .as_deref()
                .map(parse_variant)
                .transpose()
                .map_err(|e| {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_VALIDATION)
                })?;
            if reps == 0 {
                eprintln!("reps must be at least 1");
                return Err(ExitCode::from(EXIT_VALIDATION));
            }
            let runs = experiment::sweep(&sc, param, &values, reps, variant).map_err(|e| {
                eprintln!("sweep failed: {e}");
                ExitCode::from(EXIT_RUNTIME)
            })?;
            experiment::emit_sweep(&runs, &out).map_err(|e| {
                eprintln!("cannot write outputs: {e}");
                ExitCode::from(EXIT_RUNTIME)
            })?;
            println!(
                "swept {} over {} values x {} reps: {} runs -> {}",
                param.label(),
                values.len(),
                reps,
                runs.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
