//! Library surface of the normseg CLI: configuration loading, preset
//! overlays, and the command implementations, kept callable so integration
//! tests can drive them without spawning processes.

pub mod commands;
pub mod config;

use std::fmt;

/// Command-level error with the exit-code category baked in.
#[derive(Debug)]
pub enum CliError {
    /// Usage or configuration problem (exit code 1).
    Config(String),
    /// Filesystem or format problem (exit code 2).
    Io(String),
    /// An acceptance gate failed (exit code 3).
    Gate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Gate(_) => 3,
        }
    }

    pub(crate) fn stage(self, stage: &str) -> CliError {
        match self {
            CliError::Config(m) => CliError::Config(format!("{stage}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{stage}: {m}")),
            CliError::Gate(m) => CliError::Gate(format!("{stage}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Gate(m) => write!(f, "gate failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<normseg_core::Error> for CliError {
    fn from(e: normseg_core::Error) -> Self {
        use normseg_core::Error as E;
        match &e {
            E::Io { .. } | E::BadMagic | E::Truncated { .. } | E::DimsOverflow(..)
            | E::UnsupportedFormat(_) | E::ChecksumMismatch => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
