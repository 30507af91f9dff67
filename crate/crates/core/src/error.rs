use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("time {time} is not on the integration grid (dt = {dt})")]
    OffGrid { time: f64, dt: f64 },

    #[error("delay history too short: need {needed} samples, have {available}")]
    HistoryTooShort { needed: usize, available: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("target has zero variance")]
    ZeroVariance,

    #[error("target has zero norm")]
    ZeroNorm,

    #[error("sequence diverged at step {step} (|A| = {value:e})")]
    Diverged { step: usize, value: f64 },

    #[error("operating point below lasing threshold: A^2 = {a_sq:e}")]
    BelowThreshold { a_sq: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("insufficient input history: need {needed} inputs, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("config error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        message: String,
        line: Option<usize>,
    },

    #[error("malformed state matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
