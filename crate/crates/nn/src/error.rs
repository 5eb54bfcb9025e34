use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("non-finite loss at iteration {iteration} (batch samples {batch:?}): {detail}")]
    NonFinite {
        iteration: u64,
        batch: Vec<usize>,
        detail: String,
    },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Core(#[from] fingergan_core::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

impl NnError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NnError::Io {
            path: path.into(),
            source,
        }
    }
}
