use thiserror::Error;

/// Errors produced by the welfare-analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("degenerate conditioning: event probability {prob:e} below threshold")]
    DegenerateConditioning { prob: f64 },

    #[error("integration domain could not be bracketed: {0}")]
    IntegrationDomain(String),

    #[error("curve is not integrable: {0}")]
    NonintegrableCurve(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}
