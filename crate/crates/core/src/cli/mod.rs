//! The `longicause` command-line tool.
//!
//! Every command resolves one JSON configuration (defaults, then the
//! `--config` file, then `--set key=value` overrides), creates a
//! timestamped run directory under `--out`, writes the resolved
//! configuration there before doing any work, and then writes its
//! artifacts next to it.
//!
//! Exit status is 0 on success, 1 for invalid input and 2 for numeric
//! failures (non-finite losses, failed gradient checks).

mod commands;
mod config;

pub use commands::{run_ablation, run_sweep, AblationReport, Comparison, MetricTest, RunLog, SeedResult, VariantResult, ABLATION_PAIRS};
pub use config::{apply_override, resolve, CheckpointConfig, DataConfig, DataSource, RunFile, SweepConfig, Variant};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "longicause", version, about = "Counterfactual regression for longitudinal panels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set model.z_dim=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Parent directory for run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate synthetic panels, one per seed.
    Generate(CommonArgs),
    /// Simulate tumour-growth cohorts, one per seed.
    TumorSim(CommonArgs),
    /// Train a model per seed and score it on the test split.
    Train(CommonArgs),
    /// Score a saved checkpoint on the test split.
    Evaluate(CommonArgs),
    /// Train the four ablation variants per seed and compare them.
    Ablate(CommonArgs),
    /// Repeat training over a grid of outcome coefficients.
    Sweep(CommonArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    Gradcheck(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::TumorSim(_) => "tumor-sim",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Ablate(_) => "ablate",
            Command::Sweep(_) => "sweep",
            Command::Gradcheck(_) => "gradcheck",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Generate(a)
            | Command::TumorSim(a)
            | Command::Train(a)
            | Command::Evaluate(a)
            | Command::Ablate(a)
            | Command::Sweep(a)
            | Command::Gradcheck(a) => a,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
