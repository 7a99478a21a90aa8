//! Scenario files, run orchestration and output writers behind the `ptesc`
//! binary.

pub mod config;
pub mod output;
pub mod runner;
pub mod sweep;

use thiserror::Error;

pub use config::{Scenario, ScenarioConfig};
pub use runner::{execute, RunOutcome, RunReport};

/// Process exit codes.
pub mod exit {
    pub const COMPLETED: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const DIVERGED: u8 = 2;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("{field}: {message}")]
    Invalid { field: String, message: String },

    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] ptesc::Error),
}
