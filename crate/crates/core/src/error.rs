use std::io;
use std::path::Path;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vertex index {index} out of range for graph with {count} vertices")]
    Index { index: usize, count: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("height cap exceeded: tree would reach height {height} with cap {cap}")]
    HeightCap { height: usize, cap: usize },

    #[error("degenerate cluster {0}: zero total soft assignment")]
    DegenerateCluster(usize),

    #[error("divergence: Q[{row}][{col}] is zero where P is positive")]
    Divergence { row: usize, col: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Reads a whole file, tagging failures with its path.
    pub fn read_file(path: &Path) -> Result<String> {
        std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Whether the error originates from bad user input (CLI exit code 2) as
    /// opposed to an internal failure (exit code 3).
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Internal(_))
    }
}
