use thiserror::Error;

/// Errors raised by the CRF engine.
#[derive(Debug, Error)]
pub enum CrfError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("state space too large: {required} exceeds limit {limit}")]
    Capacity { required: u128, limit: u128 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CrfError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CrfError::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        CrfError::ShapeMismatch(msg.into())
    }
}

impl From<serde_json::Error> for CrfError {
    fn from(e: serde_json::Error) -> Self {
        CrfError::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for CrfError {
    fn from(e: toml::de::Error) -> Self {
        CrfError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CrfError>;
