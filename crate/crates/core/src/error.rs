use std::path::PathBuf;

use thiserror::Error;

use crate::backend::BackendError;
use crate::bpe::BpeError;
use crate::extrinsic::EvalError;
use crate::ingest::IngestError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error; every module error converts into it.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Bpe(#[from] BpeError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("config: {0}")]
    Config(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parseable category, used by the CLI error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Ingest(_) => "ingest",
            Error::Bpe(_) => "tokenizer",
            Error::Backend(_) => "backend",
            Error::Eval(EvalError::Executor(_)) => "executor",
            Error::Eval(_) => "eval",
            Error::Config(_) => "config",
            Error::Schema(_) => "schema",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }
}
