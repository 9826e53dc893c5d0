use thiserror::Error;

/// Errors raised by the auditing library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("score component {value} at pair {pair}, dimension {dim} is outside [0, 1]")]
    OutOfRange { pair: usize, dim: usize, value: f64 },

    #[error("score component at pair {pair}, dimension {dim} is not finite")]
    NonFinite { pair: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("betting factor {factor} is not positive; the network violates its output bound")]
    NonPositiveFactor { factor: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient data: needed {needed} pairs, got {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),

    #[error("scale {0} is outside [-1, 1]")]
    ScaleOutOfRange(f64),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: {source}")]
    InvalidRecord {
        line: usize,
        #[source]
        source: Box<AuditError>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for AuditError {
    fn from(e: std::io::Error) -> Self {
        AuditError::Io(e.to_string())
    }
}

pub type Result<T, E = AuditError> = std::result::Result<T, E>;
