use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use lsbm::error::{LsbmError, Result};
use lsbm::harness::{run_sweep, run_trial_full, summary_path, ExperimentConfig, TrialOptions};
use lsbm::model::threshold_report;
use lsbm::{spectral_condition_check, spectral_recover, LsbmParams, PairLabels};

#[derive(Parser)]
#[command(name = "lsbm", version, about = "Labeled stochastic block model simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the critical signal strength and the spectral-condition report.
    Threshold {
        #[arg(long)]
        params: PathBuf,
    },
    /// Recover communities from a labeled graph file.
    Recover {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Labels file, one community per line; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo sweep and write CSV plus JSON summary.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one seeded trial and emit the full diagnostics as JSON.
    Diagnose {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_stdout(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print_stdout(&format!("{text}\n"))?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Threshold { params } => {
            let params = LsbmParams::from_json(&read(&params)?)?;
            let report = json!({
                "threshold": threshold_report(&params)?,
                "spectralCondition": spectral_condition_check(&params),
            });
            emit(None, &serde_json::to_string_pretty(&report)?)
        }
        Command::Recover { params, graph, out } => {
            let params = LsbmParams::from_json(&read(&params)?)?;
            let labels = PairLabels::from_text(&read(&graph)?)?;
            let recovery = spectral_recover(&labels, &params)?;
            let text: String = recovery.labels().iter().map(|c| format!("{c}\n")).collect();
            match &out {
                Some(path) => {
                    fs::write(path, text)?;
                    emit(None, &serde_json::to_string_pretty(&recovery.summary())?)
                }
                None => print_stdout(&text),
            }
        }
        Command::Sweep { config, jobs, out } => {
            let mut config = ExperimentConfig::from_json(&read(&config)?)?;
            if let Some(jobs) = jobs {
                config.parallelism = jobs;
            }
            if out.is_some() {
                config.output_path = out;
            }
            let outcome = run_sweep(&config)?;
            if let Some(path) = &config.output_path {
                eprintln!("wrote {} and {}", path.display(), summary_path(path).display());
            }
            emit(None, &serde_json::to_string_pretty(&outcome.summary)?)
        }
        Command::Diagnose { params, seed, out } => {
            let params = LsbmParams::from_json(&read(&params)?)?;
            let outcome = run_trial_full(&params, 0, seed, &TrialOptions::default())?;
            let report = json!({
                "trial": outcome.record,
                "recovery": outcome.recovery.as_ref().map(|r| r.summary()),
                "diagnostics": outcome.diagnostics,
            });
            emit(out.as_deref(), &serde_json::to_string_pretty(&report)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                LsbmError::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
