use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument outside the domain: {0}")]
    Domain(f64),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("field length {found} does not match grid size {expected}")]
    GridMismatch { expected: usize, found: usize },

    #[error("non-finite value at node {0}")]
    NonFinite(usize),

    #[error("mountain-pass geometry failure: {0}")]
    Geometry(String),

    #[error("fit failed: {0}")]
    Fit(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
