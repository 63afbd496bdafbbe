use thiserror::Error;

use crate::config::ConfigError;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] ccl_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        LabError::Io { path: path.display().to_string(), source }
    }

    pub fn format(path: &std::path::Path, message: impl Into<String>) -> Self {
        LabError::Format { path: path.display().to_string(), message: message.into() }
    }

    /// Process exit code: 1 for invalid input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 1,
            LabError::Core(e) if is_input_error(e) => 1,
            _ => 2,
        }
    }
}

fn is_input_error(e: &ccl_core::Error) -> bool {
    use ccl_core::Error::*;
    matches!(e, BadMagic { .. } | CountMismatch { .. } | TruncatedFile { .. })
}
