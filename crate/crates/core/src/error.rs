use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Rejected input: bad moduli, fractions out of range, zero tensors where a
    /// nonzero one is required, and so on.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// The physics rules the request out (e.g. a tensor below an energy bound).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative solver stopped without meeting its tolerance. `best` is the
    /// best estimate available when it stopped.
    #[error("{what} did not converge (best estimate {best:e})")]
    NonConvergence { what: String, best: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
