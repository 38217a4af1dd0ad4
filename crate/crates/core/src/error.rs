use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid grid case: {0}")]
    InvalidCase(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("singular gain matrix: {0}")]
    SingularGain(String),

    #[error("detection threshold has not been calibrated")]
    Uncalibrated,

    #[error("infeasible attack scenario: k = {k} must exceed m - n = {redundancy}")]
    InfeasibleScenario { k: usize, redundancy: usize },

    #[error("invalid attack scenario: {0}")]
    InvalidScenario(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty data set: {0}")]
    EmptyData(&'static str),

    #[error("label {0} outside {{0, 1}}")]
    InvalidLabel(usize),

    #[error("unsupported model format version {found} (this build reads up to {supported})")]
    Version { found: u32, supported: u32 },

    #[error("corrupt payload: {0}")]
    Corrupt(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::SingularGain(_) | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
