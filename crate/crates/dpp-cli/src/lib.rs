//! Command-line front end: parses a run configuration, dispatches to the
//! design library, and writes machine-readable results.
//!
//! Every command is deterministic given the configuration and seed. Exit
//! codes: 0 on success (an INFEASIBLE search is a successful answer),
//! 2 for configuration problems, 3 for numeric failures.

use clap::{Parser, Subcommand};
use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod output;
pub mod record;

use config::{Mode, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "dpp",
    version,
    about = "Hybrid-design calculations with dynamic power-prior borrowing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Overrides simulation.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides simulation.mode.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,

    /// Overrides simulation.n_sims.
    #[arg(long, global = true, value_name = "N")]
    pub sims: Option<u64>,

    /// Worker threads for internal parallelism; 0 picks the machine default.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Output file; each command has its own default name.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Dynamic and overall weights at the configured control rates.
    Weights,
    /// Calibrate the decision threshold to the configured significance
    /// level and write the record `oc` consumes.
    Calibrate,
    /// Operating characteristics at every configured scenario.
    Oc,
    /// Minimum sample size search over the configured candidate grid.
    Optimize,
    /// Expected effective historical sample size per control rate.
    Eess,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) => m,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<dpp_core::Error> for CliError {
    fn from(e: dpp_core::Error) -> Self {
        match e {
            dpp_core::Error::Domain(_) => CliError::Config(e.to_string()),
            dpp_core::Error::Numeric(_) => CliError::Numeric(e.to_string()),
        }
    }
}

/// Flag overrides land in the configuration before validation, so the
/// echoed effective configuration is exactly what ran.
fn apply_overrides(cfg: &mut RunConfig, cli: &Cli) -> Result<(), CliError> {
    if cli.seed.is_none() && cli.mode.is_none() && cli.sims.is_none() {
        return Ok(());
    }
    let sim = cfg.simulation.as_mut().ok_or_else(|| {
        CliError::Config(
            "--seed, --mode, and --sims override the [simulation] section, \
             which this configuration does not have"
                .into(),
        )
    })?;
    if let Some(seed) = cli.seed {
        sim.seed = Some(seed);
    }
    if let Some(mode) = cli.mode {
        sim.mode = mode;
    }
    if let Some(n) = cli.sims {
        sim.n_sims = Some(n);
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .clone()
        .ok_or_else(|| CliError::Config("--config <PATH> is required".into()))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    apply_overrides(&mut cfg, &cli)?;
    cfg.validate().map_err(CliError::Config)?;
    let echo = toml::to_string(&cfg)
        .map_err(|e| CliError::Config(format!("re-emitting effective configuration: {e}")))?;

    match cli.command {
        Command::Weights => commands::weights(&cfg, &echo, cli.out),
        Command::Calibrate => commands::calibrate(&cfg, &echo, cli.out),
        Command::Oc => commands::oc(&cfg, &echo, cli.out),
        Command::Optimize => commands::optimize(&cfg, &echo, cli.out),
        Command::Eess => commands::eess(&cfg, &echo, cli.out),
    }
}
