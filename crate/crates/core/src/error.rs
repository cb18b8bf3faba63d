use thiserror::Error;

/// Errors raised by the numerical engine. Every message names the failing
/// invariant or precondition.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("symmetry violation: {0}")]
    Symmetry(String),

    #[error("secular zero-mode: {0}")]
    SecularZeroMode(String),

    #[error("divergent moment: {0}")]
    DivergentMoment(String),

    #[error("cutoff insufficient: {0}")]
    CutoffInsufficient(String),

    #[error("certification failure: {0}")]
    Certification(String),

    #[error("invalid field data: {0}")]
    FieldData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
