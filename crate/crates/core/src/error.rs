//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarError {
    /// Invalid configuration or precondition violation.
    #[error("configuration error: {0}")]
    Config(String),

    /// Shapes of two paired objects disagree.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// Rejection sampling could not place an object on the brain mask.
    #[error("object placement infeasible after {attempts} attempts")]
    PlacementInfeasible { attempts: u32 },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("empty test set")]
    EmptyTestSet,

    #[error("empty roi")]
    EmptyRoi,

    /// Malformed file contents (bad magic, truncated payload, unknown key).
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MarError>;

impl MarError {
    pub fn config(msg: impl Into<String>) -> Self {
        MarError::Config(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        MarError::DimMismatch(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        MarError::Format(msg.into())
    }
}
