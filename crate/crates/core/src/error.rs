use thiserror::Error;

/// Errors raised by dataset validation, program construction and the numerical routines.
#[derive(Debug, Error)]
pub enum EivError {
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value in `{field}` at ({row}, {col})")]
    NonFinite {
        field: &'static str,
        row: usize,
        col: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inconsistent estimator spec: {0}")]
    InconsistentSpec(String),

    #[error("estimator requires the true design X, but the dataset does not carry it")]
    MissingDesign,

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("dimension cap exceeded: p = {p} is larger than {cap}")]
    DimensionCap { p: usize, cap: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("matrix is not symmetric: |M[{row},{col}] - M[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EivError>;
