use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unsupported lineshape: {0}")]
    UnsupportedLineshape(String),

    #[error("quadrature oracle failed at x = {x}: achieved error {achieved:e}, requested {requested:e}")]
    OracleFailure { x: f64, achieved: f64, requested: f64 },

    #[error("capacity exceeded: requested {requested} unique lineshapes, {available} admissible ({detail})")]
    CapacityExceeded {
        requested: usize,
        available: usize,
        detail: String,
    },

    #[error("data quality: {message} (indices {indices:?})")]
    DataQuality { message: String, indices: Vec<usize> },

    #[error("i/o failure on {path}: {source}")]
    Persistence {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported container version {found} (supported up to {supported})")]
    Version { found: u32, supported: u32 },

    #[error("corrupt container: {0}")]
    Corruption(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Stable machine-readable tag used in CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidConfig(_) => "invalid_config",
            Error::UnsupportedLineshape(_) => "unsupported_lineshape",
            Error::OracleFailure { .. } => "oracle_failure",
            Error::CapacityExceeded { .. } => "capacity_exceeded",
            Error::DataQuality { .. } => "data_quality",
            Error::Persistence { .. } => "persistence",
            Error::Format(_) => "format",
            Error::Version { .. } => "version",
            Error::Corruption(_) => "corruption",
            Error::Parse { .. } => "parse",
            Error::Json(_) => "json",
            Error::Numerical(_) => "numerical",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Persistence {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!(
            "{what} contains a non-finite value at index {i}"
        ))),
        None => Ok(()),
    }
}
