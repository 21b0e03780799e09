use thiserror::Error;

#[derive(Debug, Error)]
pub enum KqdError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl KqdError {
    /// Numerical failures map to a distinct process exit status in the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(self, KqdError::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, KqdError>;
