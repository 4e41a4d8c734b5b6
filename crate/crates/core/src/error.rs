use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (bad shape, index, config value).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("index {index} out of range for {what} with vocabulary size {vocab}")]
    IndexOutOfRange {
        what: String,
        index: usize,
        vocab: usize,
    },

    #[error("non-finite loss at epoch {epoch} step {step}: {detail}")]
    NumericalAbort {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("artifact mismatch: {0}")]
    Artifact(String),

    #[error("AUC undefined: scores need at least one positive and one negative label")]
    AucUndefined,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::NumericalAbort { .. } => 3,
            Error::Artifact(_) => 4,
            _ => 1,
        }
    }
}
