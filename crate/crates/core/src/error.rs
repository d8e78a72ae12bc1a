use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("p = {0} is outside the supported range (1, inf)")]
    OutOfScope(f64),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("sampler acceptance rate {0:.3e} is below 1e-4")]
    Efficiency(f64),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
