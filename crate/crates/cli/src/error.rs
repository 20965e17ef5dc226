use std::path::PathBuf;

use etstl::scenario::ScenarioError;
use etstl::sim::Outcome;
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_TASK: u8 = 3;
pub const EXIT_FUNNEL: u8 = 4;
pub const EXIT_THRESHOLD: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(_) | CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } | CliError::Csv { .. } => EXIT_IO,
            CliError::Run(_) => EXIT_TASK,
        }
    }
}

/// Exit status of a finished episode.
pub fn outcome_code(outcome: &Outcome, passed: bool) -> u8 {
    match outcome {
        Outcome::FunnelViolation { .. } | Outcome::TriggerFailure { .. } => EXIT_FUNNEL,
        Outcome::TaskFailure { .. } | Outcome::SynthesisFailure { .. } | Outcome::HorizonReached => {
            EXIT_TASK
        }
        Outcome::Completed if passed => EXIT_OK,
        Outcome::Completed => EXIT_TASK,
    }
}
