use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("budget infeasible: {0}")]
    Budget(String),

    #[error("Lanczos breakdown: {0}")]
    Breakdown(String),

    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("unknown clique id {0}")]
    UnknownClique(u64),

    #[error("graph is complete; no non-adjacent pair left")]
    CompleteGraph,

    #[error("graph with {0} nodes exceeds the exact-counting limit")]
    GraphTooLarge(usize),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
