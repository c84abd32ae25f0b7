use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported dimension {0}: only one-dimensional domains are supported here")]
    UnsupportedDimension(usize),
    #[error("policy iteration did not converge in {iterations} iterations (last sup-norm update {update:e})")]
    NoConvergence { iterations: usize, update: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
