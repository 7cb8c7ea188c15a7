use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid sign {value} at position {index}: expected +1 or -1")]
    InvalidSign { index: usize, value: i64 },

    #[error("non-finite value in {what} at position {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid code length {0}: must be in 1..=4096")]
    InvalidCodeLength(usize),

    #[error("index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("triplet ({q}, {p}, {n}) must reference three distinct images")]
    DegenerateTriplet { q: usize, p: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible triplet sampling: {0}")]
    InfeasibleSampling(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss is not finite")]
    Diverged { epoch: usize, step: usize },

    #[error("duplicate id {0}")]
    DuplicateId(u64),

    #[error("no labels for id {0}")]
    MissingLabels(u64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed {what}: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            what,
            msg: msg.into(),
        }
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
