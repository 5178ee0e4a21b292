use std::path::PathBuf;

use thiserror::Error;

/// Every failure the simulator can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate embedding: {table} row {row} has zero norm")]
    DegenerateEmbedding { table: &'static str, row: usize },

    #[error("non-finite gradient in tensor `{tensor}`")]
    Numeric { tensor: String },

    #[error("{what} index {value} out of range (len {len})")]
    Index {
        what: &'static str,
        value: usize,
        len: usize,
    },

    #[error("empty batch")]
    EmptyBatch,

    #[error("degenerate split: part `{part}` is empty")]
    DegenerateSplit { part: &'static str },

    #[error("client {client} has no positives in its training block")]
    EmptyClient { client: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl Into<String>, right: impl Into<String>) -> Self {
        Error::Shape {
            op,
            left: left.into(),
            right: right.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
