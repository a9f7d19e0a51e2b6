use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("field component {component}: {source}")]
    Component { component: usize, source: EvalError },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("no boundary point found: {0}")]
    NotFound(String),
    #[error("start point ({t}, {x:?}) is not in the set")]
    InvalidStart { t: f64, x: Vec<f64> },
    #[error("polygon with N = {n} stalled at t = {t}")]
    Stalled { n: usize, t: f64 },
    #[error("lattice dynamic programming supports dimension <= 2, got {0}")]
    DimensionTooLarge(usize),
    #[error("every chain leaves the grid window before t = {0}")]
    Unreachable(f64),
    #[error("scalar majorant premise failed: {0}")]
    PremiseFailed(String),
    #[error("surface S(x) = omega(t) not found in the sampled rays")]
    SurfaceNotFound,
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
