use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid transform parameters: {0}")]
    InvalidParams(String),

    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("class {label} has {count} member(s); at least {required} required")]
    ClassTooSmall {
        label: i64,
        count: usize,
        required: usize,
    },

    #[error("objective evaluation failed for curve {curve}, parameter {param}: {source}")]
    Objective {
        curve: usize,
        param: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::ProtocolViolation(_) => ErrorClass::Usage,
            Error::ParamOutOfRange(_) | Error::Numerical(_) => ErrorClass::Numerical,
            Error::Objective { source, .. } | Error::File { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

/// Diagnostics produced while reading dataset and parameter files. Line
/// numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("file contains no data rows")]
    Empty,

    #[error("line {line}: expected {expected} fields, found {found} (ragged row)")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: non-numeric token {token:?}")]
    NonNumeric { line: usize, token: String },

    #[error("line {line}: non-finite value {token:?}")]
    NonFinite { line: usize, token: String },

    #[error("line {line}: invalid class label {token:?}")]
    BadLabel { line: usize, token: String },

    #[error("line {line}: row has no samples")]
    NoSamples { line: usize },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}
