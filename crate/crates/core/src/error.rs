use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("index ({row}, {col}) out of range for a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("dimension mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("dense materialization of {elements} elements exceeds the limit of {limit}")]
    SizeLimit { elements: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("bad BCSR dump: {0}")]
    BadDump(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
