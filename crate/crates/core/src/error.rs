use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative weight {weight} at index {index}")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("weights sum to {sum}, expected 1 within {tolerance}")]
    WeightSumOutOfTolerance { sum: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite coordinate in point {index}")]
    NonFinite { index: usize },

    #[error("empty support")]
    EmptySupport,

    #[error("invalid radius {0}: radii must be finite and nonnegative")]
    InvalidRadius(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("witness is not 1-Lipschitz between support points {a} and {b} (slope {slope})")]
    LipschitzViolation { a: usize, b: usize, slope: f64 },

    #[error("support of size {available} is smaller than k = {k}")]
    SupportTooSmall { k: usize, available: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("covariance is not symmetric positive definite: {0}")]
    BadCovariance(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: label {label:?} is not 1 or 2")]
    Label {
        path: PathBuf,
        line: usize,
        label: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used by the command-line front end to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::SolverFailure(_) | Error::Infeasible(_) => ErrorKind::Solver,
            Error::Io { .. } | Error::Parse { .. } | Error::Label { .. } | Error::Json(_) => {
                ErrorKind::Data
            }
            Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidRadius(_) => {
                ErrorKind::Usage
            }
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Solver,
    Data,
}
