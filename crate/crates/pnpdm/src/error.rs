use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operator has no spectral structure; use the LMC likelihood step")]
    NoSpectralStructure,
    #[error("non-finite value encountered at iteration {iteration} during {step}")]
    NonFinite { iteration: usize, step: &'static str },
    #[error("empty sample selection: burn_in {burn_in} leaves no iterates out of {total}")]
    EmptySelection { burn_in: usize, total: usize },
    #[error("grid too large: {points} points exceeds the {limit} limit")]
    GridTooLarge { points: usize, limit: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;
