use thiserror::Error;

use crate::families::Family;
use crate::sample::NormKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("{family:?} has no closed form for the {norm:?} norm")]
    UnsupportedPair { family: Family, norm: NormKind },

    #[error("{0} is not available for this family")]
    Unsupported(String),

    #[error("{0}")]
    Domain(String),

    #[error("CLT requires finite variance (alpha > 2), got alpha = {0}")]
    InfiniteVariance(f64),

    #[error("rejection acceptance rate {rate:.3e} below 1e-4 at y = {y}")]
    AcceptanceTooLow { y: f64, rate: f64 },

    #[error("covariance factorization failed at y = {y} even after jitter")]
    Factorization { y: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
