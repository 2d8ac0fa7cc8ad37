//! Crate-wide error type.

use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid graph: {0}")]
    Validation(String),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("no node is reachable from any graph input")]
    EmptyReachability,

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("model/vocabulary mismatch: {0}")]
    Compatibility(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn from_json(err: &serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
