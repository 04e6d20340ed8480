use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qfl::{run, CliError, ExperimentConfig, Shots};

#[derive(Parser)]
#[command(name = "qfl", version, about = "Quantum fusion layer simulator and verification suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Degree, unitarity and determinant checks over random SU blocks.
    VerifyExpressivity(Flags),
    /// Restricted-entry grids over the two-variable torus.
    TorusScan(Flags),
    /// Zero-error discrimination, query count and the CP baseline comparison.
    Separation(Flags),
    /// Empirical check of the shot-count bound.
    SampleBound(Flags),
    /// Trains the fusion layer and a CP baseline on a planted task.
    TrainSynthetic(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// JSON config; its fields override the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "qfl-out")]
    out: PathBuf,
    /// `exact` or a positive shot count.
    #[arg(long)]
    shots: Option<Shots>,
}

fn resolve(name: &str, flags: &Flags) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &flags.config {
        Some(path) => ExperimentConfig::load(name, path)?,
        None => ExperimentConfig::default_for(name)?,
    };
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(shots) = flags.shots {
        cfg.shots = shots;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (name, flags) = match &cli.command {
        Command::VerifyExpressivity(f) => ("verify-expressivity", f),
        Command::TorusScan(f) => ("torus-scan", f),
        Command::Separation(f) => ("separation", f),
        Command::SampleBound(f) => ("sample-bound", f),
        Command::TrainSynthetic(f) => ("train-synthetic", f),
    };
    let result = resolve(name, flags).and_then(|cfg| run(&cfg, &flags.out));
    match result {
        Ok(outcome) => {
            eprintln!("{name}: {} ({})", if outcome.pass { "pass" } else { "FAIL" }, outcome.summary);
            for f in &outcome.files {
                eprintln!("  wrote {}", f.display());
            }
            ExitCode::from(if outcome.pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("{name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
