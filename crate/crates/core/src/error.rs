use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    /// A cell carries data the operation cannot handle (zero norm, non-finite).
    #[error("degenerate data at cell {cell}: {reason}")]
    DegenerateData { cell: usize, reason: String },

    #[error("blow-up at t = {time} ({reason}); last valid time {last_valid}")]
    BlowUp {
        time: f64,
        last_valid: f64,
        reason: String,
    },

    #[error("velocity field is not admissible: {0}")]
    Inadmissible(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("particle from seed {seed} left the domain at t = {time}")]
    Confinement { seed: usize, time: f64 },

    #[error("misaligned time stamps: {0}")]
    Misaligned(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
