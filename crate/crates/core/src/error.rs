use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis is not orthonormal: max deviation {deviation:.3e} exceeds tolerance {tolerance:.1e}")]
    NotOrthonormal { deviation: f64, tolerance: f64 },

    #[error("basis is not closed under the bracket: projection residual {residual:.3e}")]
    NotBracketClosed { residual: f64 },

    #[error("basis element {index} is not skew-symmetric (residual {residual:.3e})")]
    NotSkew { index: usize, residual: f64 },

    #[error("invalid group parameters: {0}")]
    InvalidGroup(String),

    #[error("logarithm undefined: rotation angle {angle:.6} is within the cut margin of π")]
    CutLocus { angle: f64, step: Option<usize> },

    #[error("time grids do not match ({left} vs {right})")]
    GridMismatch { left: String, right: String },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("heat kernel requires t > 0, got {0}")]
    NonPositiveTime(f64),

    #[error("spectral truncation insufficient: needed more than {max_terms} terms at t = {t}")]
    TruncationInsufficient { t: f64, max_terms: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("too few samples: {got} (need at least {need})")]
    TooFewSamples { got: usize, need: usize },

    #[error("task failure rate {rate:.4} exceeds the 0.1% budget")]
    TaskFailures { rate: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed ensemble file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
