use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("stable calibration failed: achieved KS distance {achieved:.4} exceeds ceiling {ceiling:.4}")]
    CalibrationFailure { achieved: f64, ceiling: f64 },

    #[error("time {t} lies beyond the simulated horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("horizon insufficient: {0}")]
    HorizonInsufficient(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("value {value} out of range (maximum {max})")]
    OutOfRange { value: f64, max: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("need at least {needed} scales, got {got}")]
    InsufficientScales { needed: usize, got: usize },

    #[error("sample at scale {scale} has {got} values, need at least {needed}")]
    InsufficientSamples { scale: f64, got: usize, needed: usize },

    #[error("quantile at scale {scale} is not positive, cannot take its logarithm")]
    NonPositiveQuantile { scale: f64 },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
