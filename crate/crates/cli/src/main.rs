//! `spinewave-lab`: runs CPG simulations, Kriging fits, scenario optimizations
//! and magnetic-joint sweeps from a JSON config.
//!
//! Exit status is 0 on success, 2 for configuration errors (no output is
//! written) and 3 for failures during a run.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinewave_core::ScenarioKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error in `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spinewave-lab", version, about = "CPG gait optimization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run seed; overrides SPINEWAVE_SEED and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override a config value by dotted path, e.g. `ego.n_infill=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the oscillator chain and write its trajectory.
    CpgSim,
    /// Fit a Kriging model to a CSV dataset (last column is the response).
    KrigFit {
        #[arg(long)]
        data: PathBuf,
    },
    /// Run a full EGO optimization of a swimming scenario.
    Optimize {
        #[arg(long, value_parser = parse_scenario)]
        scenario: Option<ScenarioKind>,
    },
    /// Write the magnetic joint torque curve.
    MagneticsSweep,
    /// Continue an interrupted optimization in `--out`.
    Resume,
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse::<ScenarioKind>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spinewave-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
