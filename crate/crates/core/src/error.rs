use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected} qubits, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid mapping spec: {0}")]
    InvalidMapping(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("search budget has no finite limit")]
    UnboundedBudget,

    #[error("modulus {0} is not an irreducible polynomial of the requested degree")]
    ReducibleModulus(String),

    #[error("unknown stored path {0}")]
    UnknownPath(usize),

    #[error("trajectory breaks the signature tensor of the benchmark at state {0}")]
    TensorMismatch(usize),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("empty score list")]
    EmptyScores,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
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

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
