use thiserror::Error;

/// Errors raised by data preparation, fitting and evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("response column {0} has no observed entries")]
    EmptyColumn(usize),

    #[error("covariate matrix is rank deficient")]
    RankDeficient,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("step-size search failed after {doublings} increases at iteration {iteration}")]
    BacktrackingExhausted { iteration: usize, doublings: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dims(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}

pub(crate) fn check_shape(
    context: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected: dims(expected.0, expected.1),
            found: dims(found.0, found.1),
        });
    }
    Ok(())
}
