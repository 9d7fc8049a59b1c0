//! Orchestration layer for the SPEEDRS pipeline: binary bundle files,
//! model checkpoints, CSV artifacts, plain-text configs with manifests for
//! byte-identical reruns, and the experiment drivers behind the CLI verbs.

pub mod checkpoint;
pub mod config;
pub mod csvio;
pub mod experiments;
pub mod pb1;

use std::fmt;

/// CLI-level error. The variant decides the process exit code:
/// configuration problems exit 2, numerical failures 3, IO failures 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(speedrs_core::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical(e) => write!(f, "numerical error: {e}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<speedrs_core::Error> for CliError {
    fn from(e: speedrs_core::Error) -> Self {
        CliError::Numerical(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.into())
        } else {
            CliError::Config(format!("malformed JSON: {e}"))
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
