use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::ids::{BlockId, FunctionId, SeedId, TargetId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// Malformed input text, with the position serde reported.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// Well-formed input that violates a graph invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("unknown function id {0}")]
    UnknownFunction(FunctionId),

    #[error("unknown block id {0}")]
    UnknownBlock(BlockId),

    #[error("unknown target id {0}")]
    UnknownTarget(TargetId),

    #[error("unknown seed id {0}")]
    UnknownSeed(SeedId),

    #[error("distance map was built from graph {expected}, but the supplied graph hashes to {actual}")]
    HashMismatch { expected: String, actual: String },

    #[error("corrupt distance map: {0}")]
    CorruptMap(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty queue")]
    EmptyQueue,

    #[error("cannot compare campaigns: {0}")]
    Mismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
