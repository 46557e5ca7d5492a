//! Command-line harness: config loading, experiment orchestration and
//! artifact emission.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use fwdim::approx::Method;

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fwdim", version, about = "Forward initial margin: nested Monte Carlo oracle and regression approximators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Override the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override the config output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Brute-force nested Monte Carlo IM surface and profile.
    Oracle { config: PathBuf },
    /// Regression IM profile for one method.
    Approx {
        config: PathBuf,
        #[arg(long)]
        method: Option<Method>,
    },
    /// Oracle vs. approximators: per-time CSV and JSON summary.
    Compare { config: PathBuf },
    /// Moment diagnostics of the margin-period PnL.
    Diagnose { config: PathBuf },
    /// MVA of a profile CSV.
    Mva { config: PathBuf, profile: PathBuf },
}

impl Command {
    fn config(&self) -> &PathBuf {
        match self {
            Command::Oracle { config }
            | Command::Approx { config, .. }
            | Command::Compare { config }
            | Command::Diagnose { config }
            | Command::Mva { config, .. } => config,
        }
    }
}

/// Loads the config, applies flag overrides and runs the command on a
/// dedicated worker pool.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.command.config())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if cli.threads == Some(0) {
        return Err(CliError::Config("invalid --threads: must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("invalid --threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Oracle { .. } => commands::cmd_oracle(&cfg).map(drop),
        Command::Approx { method, .. } => commands::cmd_approx(&cfg, method.unwrap_or(cfg.method)).map(drop),
        Command::Compare { .. } => commands::cmd_compare(&cfg).map(drop),
        Command::Diagnose { .. } => commands::cmd_diagnose(&cfg).map(drop),
        Command::Mva { profile, .. } => commands::cmd_mva(&cfg, profile).map(drop),
    })
}
