use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("numerical failure at iteration {iter}: {msg}")]
    Numeric { iter: usize, msg: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the input data rather than the configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data(_) | Error::Io { .. } | Error::Infeasible(_) | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
