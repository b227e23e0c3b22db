use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation, bound and imaging routines.
#[derive(Debug, Error)]
pub enum RadarError {
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("ill-conditioned {what}: eigenvalue range [{min_eig:e}, {max_eig:e}]")]
    Conditioning {
        what: String,
        min_eig: f64,
        max_eig: f64,
    },

    #[error(
        "dense dictionary needs {bytes} bytes ({cols} columns x {rows} rows), budget is {budget} bytes"
    )]
    SizeLimit {
        rows: usize,
        cols: usize,
        bytes: usize,
        budget: usize,
    },

    #[error("no anchor cell satisfies the isolation rule ({0} m)")]
    NoAnchor(f64),

    #[error("sensor {sensor}: synchronization offset unobservable (line-of-sight speed {speed} m/s)")]
    Unobservable { sensor: usize, speed: f64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

pub type Result<T> = std::result::Result<T, RadarError>;

impl RadarError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RadarError::Io {
            path: path.into(),
            source,
        }
    }
}
