use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("network validation failed: {0}")]
    Validation(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (mu = {mu:e}, max |z| = {max_abs_z:e})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        mu: f64,
        max_abs_z: f64,
    },

    #[error("forward cache is stale (model changed since forward pass)")]
    StaleCache,

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            got,
        }
    }
}
