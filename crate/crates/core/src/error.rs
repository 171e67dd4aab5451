use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite result: {0}")]
    NonFiniteResult(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown feature mode `{0}`")]
    UnknownMode(String),
    #[error("at least 2 views are required, got {0}")]
    TooFewViews(usize),
    #[error("census window must be odd and >= 3, got {0}")]
    BadWindow(usize),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("prediction and ground truth share no valid pixel")]
    EmptyOverlap,
    #[error("ground truth depth is not strictly positive at a valid pixel")]
    NonPositiveGt,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: non-finite value `{value}`")]
    NonFiniteValue { path: PathBuf, value: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: unsupported variant: {message}")]
    UnsupportedVariant { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
