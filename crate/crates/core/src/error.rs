use thiserror::Error;

/// Errors raised by the library. Verdicts of the convexity tests are data and
/// never surface here.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QvarError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point outside domain: {0}")]
    Domain(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("inadmissible competitor: {0}")]
    InvalidCompetitor(String),
    #[error("invalid form: {0}")]
    InvalidForm(String),
    #[error("invalid integrand: {0}")]
    InvalidIntegrand(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("inconsistent sheet matching: {0}")]
    InconsistentMatching(String),
    #[error("truncation schedule unattainable: {0}")]
    ScheduleUnattainable(String),
}

pub type Result<T> = std::result::Result<T, QvarError>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::QvarError::InvalidInput(format!($($arg)*))
    };
}
pub(crate) use invalid;
