use thiserror::Error;

use crate::contingency::EdgeKey;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("ragged rows: row {row} has {found} cells, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("alphabet overflow: {0} distinct categories (at most 26 plus gap)")]
    AlphabetOverflow(usize),
    #[error("invalid symbol {symbol:?} at row {row}, column {col}")]
    InvalidSymbol { symbol: char, row: usize, col: usize },
    #[error("alignment too small: {rows} rows x {cols} columns (need at least 2 x 2)")]
    TooSmall { rows: usize, cols: usize },
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error("column pair ({j}, {k}) out of range for {len} columns")]
    ColumnOutOfRange { j: usize, k: usize, len: usize },
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeKey),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("selection contains no edges")]
    EmptySelection,
    #[error("sequence length {found} does not match model length {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(char),
    #[error("echo group has no anchor")]
    AmbiguousAnchor,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
