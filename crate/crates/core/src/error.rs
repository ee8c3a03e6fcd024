use thiserror::Error;

/// Errors shared across the crate. Numerical routines reject malformed
/// inputs eagerly rather than propagating NaNs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}{}", context_suffix(.context))]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("gamma must lie in (0, 1], got {0}")]
    InvalidGamma(f64),

    #[error("{0}")]
    InvalidInput(String),

    #[error("weights must be nonnegative and sum to 1 (sum = {sum}, min = {min})")]
    InvalidWeights { sum: f64, min: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("relaxation schedule violates lambda_t <= 1/gamma at t = {t}: lambda = {lambda}, 1/gamma = {limit}")]
    InvalidSchedule { t: usize, lambda: f64, limit: f64 },

    #[error("operator is not certifiable: {0}")]
    NotCertifiable(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(expected: usize, got: usize, context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected,
            got,
            context: context.into(),
        }
    }
}
