//! Crate-wide error type.

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by dataset handling, models, attacks, metrics, and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input values are outside an operation's domain (e.g. non-binary
    /// features for Bernoulli noise, non-finite logits).
    #[error("domain error: {0}")]
    Domain(String),

    /// A structured input file could not be parsed.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// Curve fitting failed to converge from any starting point.
    #[error("curve fit did not converge (best residual norm {best_residual})")]
    FitDidNotConverge { best_residual: f64 },

    /// An attack attempted to query past its declared budget.
    #[error("oracle query budget exhausted after {used} queries")]
    BudgetExhausted { used: u64 },

    /// An experiment stage failed; wraps the underlying error.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Tag an error with the experiment stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
