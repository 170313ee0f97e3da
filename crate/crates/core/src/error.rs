use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance not positive definite after jitter schedule (last jitter {last_jitter:e})")]
    JitterExhausted { last_jitter: f64 },
    #[error("degenerate curve: max equals min")]
    DegenerateCurve,
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("class {0} has no training examples")]
    MissingClass(usize),
    #[error("regularized normal equations are singular")]
    SingularSystem,
    #[error("input has zero variance")]
    ConstantInput,
    #[error("no problems with {0} prompt source")]
    MissingSource(&'static str),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("training step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
