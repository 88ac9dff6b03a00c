use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("{rule} rule does not support dimension {dim} (supported: {min}..={max})")]
    UnsupportedDimension {
        rule: &'static str,
        dim: usize,
        min: usize,
        max: usize,
    },

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid hyper-rectangle: {0}")]
    InvalidRect(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rule table line {line}: {msg}")]
    TableParse { line: usize, msg: String },

    #[error("invalid rule table: {0}")]
    InvalidTable(String),

    #[error("wire format: {0}")]
    Wire(String),

    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T, E = QuadError> = std::result::Result<T, E>;
