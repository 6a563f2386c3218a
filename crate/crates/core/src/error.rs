use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("time {t} outside [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A path weight was not finite, e.g. log of a vanishing jump weight.
    #[error("path evaluation failed at time {time}: {reason}")]
    PathFailure { time: f64, reason: String },
    #[error("{failed} of {total} paths failed; first: {first}")]
    PathFailures { failed: usize, total: usize, first: String },
    #[error("field model error: {0}")]
    Model(String),
    #[error("dimension {dim} exceeds dense cap {cap}")]
    DimensionOverflow { dim: usize, cap: usize },
    #[error("operator not Hermitian: deviation {deviation:e} vs norm {norm:e}")]
    NotHermitian { deviation: f64, norm: f64 },
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("config error at line {line}, column {column}: {msg}")]
    Config { line: usize, column: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
