//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("empty audio")]
    EmptyAudio,

    #[error("above Nyquist: fmax {fmax} Hz exceeds {nyquist} Hz")]
    AboveNyquist { fmax: f64, nyquist: f64 },

    #[error("invalid magnitude: negative value {value} at index {index}")]
    InvalidMagnitude { value: f64, index: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("non-finite values produced by {op}")]
    NonFinite { op: String },

    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },

    #[error("midi parse error: {0}")]
    MidiParse(String),

    #[error("wav error: {0}")]
    Wav(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("unknown parameter {0}")]
    UnknownParameter(String),

    #[error("duplicate parameter {0}")]
    DuplicateParameter(String),

    #[error("config error in field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("training diverged at step {step}: {msg}")]
    TrainDiverged { step: u64, msg: String },

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape_mismatch(context: &str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            context: context.to_string(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn config(field: &str, msg: impl ToString) -> Self {
        Error::Config {
            field: field.to_string(),
            msg: msg.to_string(),
        }
    }

    /// Process exit code for the CLI: usage/config errors exit 2, everything
    /// else (check failures, IO, numeric aborts) exits 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            _ => 1,
        }
    }
}
