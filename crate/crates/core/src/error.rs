use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("non-numeric value {value:?} in column {column:?} at data row {row}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing value in column {column:?} at data row {row}")]
    MissingValue { row: usize, column: String },

    #[error("label out of range: {label} at row {row} (expected 1..={k})")]
    LabelOutOfRange { row: usize, label: String, k: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("category {0} has no observations")]
    MissingCategory(u32),

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("split would leave an empty partition ({n_train} train / {n_val} validation)")]
    EmptyPartition { n_train: usize, n_val: usize },

    #[error("column {0:?} has zero variance and cannot be standardized")]
    ZeroVariance(String),

    #[error("need at least {k} distinct values, found {found}")]
    TooFewDistinct { k: usize, found: usize },

    #[error("input too large for exhaustive search: {n} values (limit {limit})")]
    TooLarge { n: usize, limit: usize },

    #[error("thresholds must be strictly increasing")]
    NonMonotoneThresholds,

    #[error("variable {0:?} is not binary (0/1)")]
    NotBinary(String),

    #[error("variable {0:?} is binary; use binary_effect instead of elasticity")]
    BinaryVariable(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("non-finite log-likelihood at iteration {iteration}")]
    NonFiniteLikelihood { iteration: usize },

    #[error("svg output is only available for curve data")]
    NotCurveData,
}

impl Error {
    /// Numerical failures (divergence, non-finite objectives) as opposed to
    /// invalid input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::NonFiniteLikelihood { .. } | Error::NonFinite { .. }
        )
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
