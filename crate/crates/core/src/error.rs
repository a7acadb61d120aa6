use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("column map does not resolve feature `{feature}` (expected header `{column}`)")]
    MissingColumn { feature: &'static str, column: String },

    #[error("line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dataset contains a single class; both normal and abnormal samples are required")]
    SingleClass,

    #[error("dataset contains unlabeled samples")]
    Unlabeled,

    #[error("cannot build {k} folds: {reason}")]
    InvalidFolds { k: usize, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("timestamps must be strictly increasing (index {index}: {previous} -> {current})")]
    NonIncreasingTime {
        index: usize,
        previous: f64,
        current: f64,
    },

    #[error("model format version {found} is newer than supported version {supported}")]
    UnsupportedFormat { found: u32, supported: u32 },

    #[error("model file: {0}")]
    Model(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

/// Coarse error class, used to select process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) | Error::InvalidFolds { .. } => {
                ErrorClass::Usage
            }
            Error::NonFinite(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
