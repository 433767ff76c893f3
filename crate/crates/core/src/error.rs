use thiserror::Error;

/// Errors raised by the optimizer, the linear algebra kernels and the
/// polynomial machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numerical routine could not produce a trustworthy result.
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// Jacobi sweeps did not drive the off-diagonal mass below tolerance.
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    EigenNoConvergence { sweeps: usize, residual: f64 },

    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A [`StepperConfig`](crate::StepperConfig) invariant does not hold.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Polynomial text could not be parsed.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
