use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular evaluation: {0}")]
    Singularity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("all {attempts} seeds failed: {reasons:?}")]
    AllSeedsFailed {
        attempts: usize,
        reasons: Vec<String>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
