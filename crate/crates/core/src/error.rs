use thiserror::Error;

/// Errors raised by the numerical routines and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "toeplitz breakdown at order {order}: prediction variance {variance:e} is not positive"
    )]
    Breakdown { order: usize, variance: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("rejection sampler exceeded its budget of {0} attempts")]
    RejectionBudget(usize),

    #[error("empty chain: {0}")]
    EmptyChain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
