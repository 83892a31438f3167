use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {0:e}")]
    NotPsd(f64),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset {id}: {reason}")]
    InvalidDataset { id: String, reason: String },

    #[error("unrecorded dependency: {0}")]
    UnrecordedDependency(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite loss on graph {graph}")]
    NonFiniteLoss { graph: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dataset(id: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidDataset {
            id: id.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status for the command-line front end:
    /// 1 usage, 2 data validation, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 1,
            Error::Parse { .. }
            | Error::InvalidDataset { .. }
            | Error::Checkpoint { .. }
            | Error::Io { .. } => 2,
            Error::ShapeMismatch { .. }
            | Error::NotSymmetric { .. }
            | Error::NotPsd(_)
            | Error::NonFinite(_)
            | Error::UnrecordedDependency(_)
            | Error::NonFiniteLoss { .. } => 3,
        }
    }
}
