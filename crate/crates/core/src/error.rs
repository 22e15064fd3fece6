use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure category, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cycle detected in concept graph at node `{0}`")]
    Cycle(String),

    #[error("multiple roots in hypernym input: {0:?}")]
    MultipleRoots(Vec<String>),

    #[error("cannot remove the root node `{0}`")]
    RootRemoval(String),

    #[error("pruning {requested} levels would consume the root; at most {max_feasible} levels are feasible")]
    PruneTooDeep { requested: usize, max_feasible: usize },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("node `{node}` cannot be sampled: {reason}")]
    Unsampleable { node: String, reason: String },

    #[error("layout error: {0}")]
    Layout(String),

    #[error("missing channel `{0}` in recording")]
    MissingChannel(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("malformed input {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::PruneTooDeep { .. } | Error::RootRemoval(_) | Error::Shape { .. } => {
                ErrorKind::Validation
            }
            Error::NonFinite(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
