use thiserror::Error;

use crate::grid::Grid2D;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left:?} vs {right:?}")]
    GridMismatch { left: Grid2D, right: Grid2D },

    #[error("length mismatch: expected {expected}, got {got} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("CFL violation: dt = {dt:e} exceeds bound {bound:e}; suggested dt = {suggested:e}")]
    Cfl { dt: f64, bound: f64, suggested: f64 },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
