//! Scenario loading, experiment sweeps and output files for the `rpluw` binary.

pub mod plan;
pub mod runner;

use std::fs;
use std::path::Path;

use thiserror::Error;

use rpluw::config::{parse_scenario_str, ConfigError};
use rpluw::sim::Scenario;

pub use plan::{parse_plan_str, ExperimentPlan, SweepPoint};
pub use runner::{run_checked, run_experiments, write_atomic, ExperimentSummary, Failure, RunRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN_FAILURE: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("cannot read {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Run(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Unreadable { .. } => EXIT_CONFIG_ERROR,
            CliError::Run(_) => EXIT_RUN_FAILURE,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Unreadable { path: path.display().to_string(), message: e.to_string() })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    parse_scenario_str(&read(path)?).map_err(|source| CliError::Config { path: path.display().to_string(), source })
}

pub fn load_plan(path: &Path) -> Result<ExperimentPlan, CliError> {
    parse_plan_str(&read(path)?).map_err(|source| CliError::Config { path: path.display().to_string(), source })
}
