use thiserror::Error;

pub type Result<T> = std::result::Result<T, SipError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SipError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A variance estimate came out non-positive, so autocorrelations are undefined.
    #[error("degenerate variance: {context} (estimate = {estimate})")]
    DegenerateVariance { context: String, estimate: f64 },

    /// Cholesky broke down. For a correctly clamped w this cannot happen.
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),
}

impl SipError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SipError::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(context: impl Into<String>, estimate: f64) -> Self {
        SipError::DegenerateVariance {
            context: context.into(),
            estimate,
        }
    }
}
