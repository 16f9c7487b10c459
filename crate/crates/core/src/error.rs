//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the attempted operation.
    #[error("shape mismatch in {op}: {lhs} vs {rhs}")]
    Shape {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// An input violates a mathematical precondition (e.g. log of a
    /// non-positive value).
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// An API contract was violated (e.g. backward from a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Bad configuration value or unknown option tag.
    #[error("configuration error: {0}")]
    Config(String),

    /// A data file failed to parse. `line` is 1-based when known.
    #[error("data format error in {path} (line {line}): {msg}")]
    DataFormat {
        path: String,
        line: usize,
        msg: String,
    },

    /// Not enough samples for the requested operation.
    #[error("size error: {0}")]
    Size(String),

    /// A gradient fed to the optimizer was not finite.
    #[error("optimizer error: non-finite gradient for parameter {param}")]
    Optimizer { param: String },

    /// Training produced a non-finite loss and was aborted.
    #[error("training aborted at epoch {epoch}, batch {batch}: {msg}")]
    Training {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    /// A numeric check (finite differences, Monte Carlo oracle) failed
    /// or could not be evaluated.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A checkpoint/dataset pair disagrees on dimensions.
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: &'static str, lhs: impl ToString, rhs: impl ToString) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        }
    }
}
