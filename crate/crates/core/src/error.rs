use thiserror::Error;

/// Every failure the toolkit reports.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconsistent region: {0}")]
    InconsistentRegion(String),

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e}): {context}")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("cavity disconnects the domain into {components} components")]
    DisconnectedDomain { components: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("inverse crime: {0}")]
    InverseCrime(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
