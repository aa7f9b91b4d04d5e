use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown constellation identifier `{0}`")]
    UnknownConstellation(String),

    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite numeric input: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical resolution failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True for failures caused by bad user input rather than by numerics or IO.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::UnknownConstellation(_)
                | Error::InvalidConstellation(_)
                | Error::InvalidParameter { .. }
                | Error::NonFinite(_)
                | Error::DimensionMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
