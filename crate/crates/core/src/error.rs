use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed table {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("empty table: {0}")]
    EmptyTable(PathBuf),

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("invalid label {value:?} on data line {line} (expected 0 or 1)")]
    InvalidLabel { line: usize, value: String },

    #[error("non-numeric feature {value:?} in column `{column}` on data line {line}")]
    NonNumericFeature {
        line: usize,
        column: String,
        value: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("cannot draw {requested} distinct pairs from {available} available")]
    TooManyPairs { requested: usize, available: usize },

    #[error("pair ({i}, {j}) is not part of the pair set")]
    PairOutsideSet { i: usize, j: usize },

    #[error("judge `{judge}` answered pair ({i}, {j}) more than once")]
    DuplicateResponse { judge: String, i: usize, j: usize },

    #[error("invalid constraint set: {0}")]
    InvalidConstraints(String),

    #[error("invalid judge spec: {0}")]
    InvalidJudgeSpec(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("tabular hypothesis needs a dataset row index, got a raw feature vector")]
    TabularNeedsIndex,

    #[error("row index {index} out of range for {n} rows")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid randomized classifier: {0}")]
    InvalidClassifier(String),

    #[error("invalid hypothesis pool: {0}")]
    InvalidPool(String),

    #[error("degenerate design matrix: {0}")]
    DegenerateDesign(String),

    #[error("sparsification failed after {attempts} attempts (best deviation {best_deviation})")]
    SparsifyExhausted { attempts: usize, best_deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("oracle failed at iteration {iteration}: {source}")]
    Oracle {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("solve report carries no dual ledger; rerun the solver to certify")]
    MissingTrajectory,

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
