use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("minibatch is empty")]
    EmptyBatch,

    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("step size {eta} exceeds the stability bound {max}")]
    StepSizeTooLarge { eta: f64, max: f64 },

    #[error("input must be diagonal: {0}")]
    NonDiagonalInput(&'static str),

    #[error("base shift is enabled but no target was supplied")]
    MissingTarget,

    #[error("target does not provide the log-density Laplacian needed by the base shift divergence")]
    UnsupportedBaseShiftTarget,

    #[error("inner loss became non-finite at inner step {step}")]
    DivergentLoss { step: usize },

    #[error("particle {particle} became non-finite at step {step}")]
    NonFiniteParticle { step: usize, particle: usize },

    #[error("preconditioner entries must be positive and finite")]
    NonPositivePreconditioner,

    #[error("preconditioner mode does not support this operation")]
    ModeMismatch,

    #[error("need at least 2 particles, got {0}")]
    TooFewParticles(usize),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
