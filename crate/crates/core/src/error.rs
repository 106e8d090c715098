use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("classification error: {0}")]
    Classification(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A quantity that must hold by construction (a real trace, a nonnegative
    /// determinant) was violated beyond tolerance.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
