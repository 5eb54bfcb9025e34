use std::path::Path;

use thiserror::Error;

/// Exit status 1 for bad input or configuration, 2 for failures while running.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<fingergan_core::Error> for CliError {
    fn from(e: fingergan_core::Error) -> Self {
        use fingergan_core::Error::*;
        match e {
            InvalidParameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<fingergan_nn::NnError> for CliError {
    fn from(e: fingergan_nn::NnError) -> Self {
        match e {
            fingergan_nn::NnError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
