use thiserror::Error;

/// Errors raised across the design and simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension { context: &'static str, expected: String, actual: String },

    #[error("matrix has non-finite entries ({context})")]
    NonFinite { context: &'static str },

    #[error("singular matrix: {deficient} column(s) rank-deficient ({context})")]
    Singular { context: &'static str, deficient: usize },

    #[error("invalid parameter `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("lp solver: {0}")]
    Lp(String),

    #[error("empty attack set: the polytope A alpha >= b has no admissible point")]
    EmptyAttackSet,

    #[error("filter pole {0} outside the open interval (0, 1)")]
    UnstablePole(f64),

    #[error("simulation diverged at step {step}: |X|_inf = {norm:e}")]
    Diverged { step: usize, norm: f64 },

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension { context, expected: expected.to_string(), actual: actual.to_string() }
    }

    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), reason: reason.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
