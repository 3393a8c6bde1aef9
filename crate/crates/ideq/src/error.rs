use thiserror::Error;

use crate::solver::Trajectory;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} has no closed-form proximal map")]
    UnsupportedProx(&'static str),

    #[error("non-finite iterate at step {}", .0.step)]
    Diverged(Box<Diverged>),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Divergence report: the step at which a non-finite entry appeared and
/// everything recorded up to that point.
#[derive(Debug)]
pub struct Diverged {
    pub step: usize,
    pub trajectory: Trajectory,
}

impl Error {
    pub fn shape_mismatch(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn diverged(step: usize, trajectory: Trajectory) -> Self {
        Error::Diverged(Box::new(Diverged { step, trajectory }))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
