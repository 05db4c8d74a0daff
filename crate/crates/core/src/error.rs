use std::path::PathBuf;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("matrix is singular (pivot {pivot})")]
    Singular { pivot: usize },

    #[error("{context}: need at least {needed} rows, got {actual}")]
    InsufficientRows {
        context: &'static str,
        needed: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context} at step {step}")]
    NonFinite { context: &'static str, step: usize },

    #[error("training diverged at step {step} (non-finite loss); {} losses recorded", trace.len())]
    Diverged { step: usize, trace: Vec<f64> },

    #[error("zero-variance coordinate {index} in {context}")]
    ZeroVariance { context: &'static str, index: usize },

    #[error("csv error in {path:?}: {message}")]
    Csv { path: Option<PathBuf>, message: String },

    #[error("column {column:?} (index {index}) is not numeric at data row {row}: {value:?}")]
    NonNumericColumn {
        column: String,
        index: usize,
        row: usize,
        value: String,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for failures that stem from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::Singular { .. }
                | Error::NonFinite { .. }
                | Error::Diverged { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
