use thiserror::Error;

/// Errors raised by model construction, inference and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("ill-conditioned covariance: {0}")]
    IllConditioned(String),

    #[error("total probability underflow: {0}")]
    Underflow(String),

    #[error("insufficient effective data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("EM failed: {0}")]
    EmFailed(String),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery itself, as opposed to
    /// malformed inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned(_)
                | Error::Underflow(_)
                | Error::InsufficientData(_)
                | Error::NonFinite(_)
                | Error::EmFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}
