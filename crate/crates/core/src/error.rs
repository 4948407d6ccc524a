use thiserror::Error;

/// Errors raised by the model, solvers and I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("time {t} outside grid [{t0}, {t_end}]")]
    OutOfRange { t: f64, t0: f64, t_end: f64 },

    #[error("state is not an equilibrium (residual {residual:e})")]
    NotEquilibrium { residual: f64 },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("unreachable target: {0}")]
    Unreachable(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
