use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fixed-point iteration did not converge after {iterations} steps (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("oversampling factor overflow: P^alpha = {0:e} exceeds 2^62")]
    Overflow(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
