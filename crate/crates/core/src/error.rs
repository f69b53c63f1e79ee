//! Error type shared across the pipeline.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CadxError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CadxError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CadxError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CadxError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CadxError::Validation(message.into())
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CadxError::Numeric(message.into())
    }

    /// Process exit code for the CLI: 2 for data/validation problems,
    /// 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CadxError::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CadxError>;
