//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A result is representable only in log scale (unscaled value overflows).
    #[error("range error: {0}")]
    Range(String),

    /// An iterative routine exhausted its budget. Carries the best value found.
    #[error("failed to converge: {context} (partial value {value:.6e}, estimated error {error_estimate:.3e})")]
    Convergence {
        context: String,
        value: f64,
        error_estimate: f64,
    },

    /// A matrix factorisation failed (rank deficiency, non-positive pivot).
    #[error("linear algebra error: {0}")]
    LinearAlgebra(String),

    /// The GLM fit exhausted its iteration budget. Carries the last iterate.
    #[error("GLM fit did not converge after {iterations} iterations (score norm {max_score_norm:.3e})")]
    FitDidNotConverge {
        iterations: usize,
        max_score_norm: f64,
        last_iterate: Vec<f64>,
    },

    /// A precondition on an input object was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A (family, latent) combination the methodology does not define.
    #[error("unsupported combination: {0}")]
    Unsupported(String),

    /// Malformed input data (CSV rows, support violations).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
