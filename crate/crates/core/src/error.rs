use thiserror::Error;

pub type Result<T> = std::result::Result<T, GglrError>;

#[derive(Debug, Error)]
pub enum GglrError {
    #[error("no observations")]
    NoObservations,

    #[error("insufficient observations: system matrix is numerically singular")]
    InsufficientObservations,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("system matrix is singular along a search direction")]
    SingularSystem,

    #[error("numerical breakdown")]
    NumericalBreakdown,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(GglrError::DimensionMismatch(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(GglrError::InvalidParameter(msg.into()))
}
