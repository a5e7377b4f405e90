use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChnsError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("kernel tabulation does not cover a {nx}x{ny} grid")]
    IncompleteKernel { nx: usize, ny: usize },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("non-finite value detected at step {step} in {field}")]
    NonFinite { step: usize, field: &'static str },

    #[error("potential has no third derivative; second-order probes need F'''")]
    MissingThirdDerivative,

    #[error("{0}")]
    Rejected(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ChnsError>;
