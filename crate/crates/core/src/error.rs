use thiserror::Error;

/// Errors raised by the optimization library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for {len} examples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidSpec(String),

    #[error("non-finite gradient at inner step {inner_step}{}", outer_suffix(.outer_step))]
    Divergence {
        outer_step: Option<usize>,
        inner_step: usize,
    },

    #[error("infinite loss: reference entry {index} is zero where the other argument is positive")]
    InfiniteLoss { index: usize },

    #[error("entry {index} is not strictly positive ({value})")]
    NonPositiveEntry { index: usize, value: f64 },

    #[error("schedule queried at t = {t} beyond horizon T = {horizon}")]
    BeyondHorizon { t: usize, horizon: usize },

    #[error("degenerate curvature: smallest eigenvalue {mu:e} is not positive")]
    DegenerateCurvature { mu: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

fn outer_suffix(outer: &Option<usize>) -> String {
    match outer {
        Some(t) => format!(" of outer iteration {t}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach the outer iteration index to an inner-solver divergence.
    pub fn at_outer(self, t: usize) -> Self {
        match self {
            Error::Divergence { inner_step, .. } => Error::Divergence {
                outer_step: Some(t),
                inner_step,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
