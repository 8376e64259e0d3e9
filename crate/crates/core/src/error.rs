use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = QmoeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QmoeError {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("qubit index {qubit} out of range for {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("controlled-Z needs two distinct qubits, got {0} twice")]
    SameQubit(usize),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}")]
    Config(String),

    #[error("{path}: bad IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { path: PathBuf, found: u32, expected: u32 },

    #[error("{path}: truncated IDX file, need {needed} bytes but found {found}")]
    Truncated { path: PathBuf, needed: usize, found: usize },

    #[error("image file has {images} samples but label file has {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("dataset error: {0}")]
    Data(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl QmoeError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            QmoeError::Config(_) | QmoeError::Json(_) => ErrorKind::Config,
            QmoeError::BadMagic { .. }
            | QmoeError::Truncated { .. }
            | QmoeError::CountMismatch { .. }
            | QmoeError::Data(_) => ErrorKind::Data,
            _ => ErrorKind::Runtime,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QmoeError::Io {
            path: path.into(),
            source,
        }
    }
}
