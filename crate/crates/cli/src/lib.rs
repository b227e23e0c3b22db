//! `dsradar`: command-line front end for the radar imaging toolkit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::fmt;

use radar_core::RadarError;

pub use commands::{run, Command};
pub use config::Config;

/// Usage errors exit with 1, runtime failures with 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    /// Configuration problems are the caller's fault; anything else is a
    /// runtime failure.
    pub(crate) fn from_config(e: RadarError) -> Self {
        match e {
            RadarError::Config(_) | RadarError::Argument(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<RadarError> for CliError {
    fn from(e: RadarError) -> Self {
        match e {
            RadarError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
