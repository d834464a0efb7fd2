use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure in {context}: residual {residual:e}")]
    NumericalFailure { context: String, residual: f64 },

    #[error("specification violation: {0}")]
    SpecViolation(String),

    #[error("super and sub iteration limits disagree by {gap:e} (allowed {allowed:e})")]
    UniquenessViolation { gap: f64, allowed: f64 },

    #[error("monotone iteration lost monotonicity by {violation:e} at step {step}")]
    MonotonicityViolation { step: usize, violation: f64 },

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("K undefined: {0}")]
    KUndefined(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(context: impl Into<String>, residual: f64) -> Self {
        Error::NumericalFailure {
            context: context.into(),
            residual,
        }
    }
}
