use std::process::ExitCode;

use buying_rights::MarketError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid scenario input.
    #[error("{0}")]
    Parse(String),
    /// The simulation or an output write failed.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Parse(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(4),
        }
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Exit status of a check that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Clean,
    /// A profitable deviation or a violated axiom was found.
    Found,
}

impl Verdict {
    pub fn exit_code(self) -> ExitCode {
        match self {
            Verdict::Clean => ExitCode::SUCCESS,
            Verdict::Found => ExitCode::from(3),
        }
    }
}
