use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },

    #[error("negative entry {value} at position {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("vector sums to {sum}, expected 1 within {tol:e}")]
    NotNormalized { sum: f64, tol: f64 },

    #[error("index ({i}, {j}) outside a {n}x{m} grid")]
    IndexOutOfRange { i: usize, j: usize, n: usize, m: usize },

    #[error("sample set is empty")]
    EmptySample,

    #[error("transductive pool must have even size, got {0}")]
    OddPoolSize(usize),

    #[error("transductive pool contains duplicate index ({0}, {1})")]
    DuplicateIndex(usize, usize),

    #[error("weights must be strictly positive: {0}")]
    ZeroWeight(String),

    #[error("weighted trace norm is infinite (mass on zero-weight rows or columns)")]
    InfiniteNorm,

    #[error("solver requires the squared loss")]
    UnsupportedLoss,

    #[error("SGD diverged: objective {objective} exceeded 10x the initial value {initial}; reduce the step size")]
    Divergence { objective: f64, initial: f64 },

    #[error("training-loss ceiling {target} unreachable; best achieved {achieved}")]
    Infeasible { target: f64, achieved: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
