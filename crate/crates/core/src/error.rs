use thiserror::Error;

/// Errors produced by the spectral, simulation and approximation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("eigenvalue series diverges: {0}")]
    Divergent(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("degenerate spectrum: {0}")]
    Degenerate(String),

    #[error("budget exceeded: limit {limit} ({context})")]
    BudgetExceeded { limit: usize, context: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("value {value} outside the domain {domain}")]
    OutOfDomain { value: f64, domain: &'static str },

    #[error("root finding did not converge: {0}")]
    NoConvergence(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
