use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use covsim_core::harness::{self, Experiment, HarnessError, RunConfig, RunOptions};

/// Covariance-estimation Monte-Carlo experiments (MSE sweep, SE sweep, κ table).
#[derive(Parser, Debug)]
#[command(name = "covsim", version)]
struct Cli {
    /// mse-sweep | se-sweep | kappa-table
    experiment: String,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output CSV path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated estimator list: ideal,sample,viaq,ala.
    #[arg(long)]
    estimator: Option<String>,
    /// Suppress progress lines on stderr.
    #[arg(long)]
    quiet: bool,
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let experiment: Experiment = cli.experiment.parse()?;
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(list) = &cli.estimator {
        config.set_estimators(list)?;
    }
    if cli.threads == Some(0) {
        return Err(HarnessError::Config("--threads must be positive".into()));
    }
    let options = RunOptions {
        threads: cli.threads,
        progress: !cli.quiet,
    };
    let rows = harness::run(experiment, &config, &options)?;
    match &cli.out {
        Some(path) => harness::emit_csv(&rows, path)?,
        None => harness::write_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("covsim: {e}");
            ExitCode::FAILURE
        }
    }
}
