use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlimmerError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// `row` and `col` are 1-based positions in the source file.
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("ragged row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("row count mismatch in {source_name}: expected {expected} rows, found {found}")]
    RowCountMismatch {
        source_name: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at point {point}, column {column}")]
    NonFinite { point: usize, column: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("too few points for neighbor count: {points} points, k = {k}")]
    TooFewPoints { points: usize, k: usize },

    #[error("invalid window operation: {0}")]
    Window(String),
}

pub type Result<T, E = GlimmerError> = std::result::Result<T, E>;
