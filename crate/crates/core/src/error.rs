use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FgqError>;

#[derive(Debug, Error)]
pub enum FgqError {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported layout: {0}")]
    UnsupportedLayout(String),

    #[error("unknown version: {0}")]
    UnknownVersion(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precision mismatch: {0}")]
    Precision(String),

    #[error("32-bit accumulator overflow at filter {filter}, output ({row}, {col}), group {group}")]
    AccumulatorOverflow {
        filter: usize,
        row: usize,
        col: usize,
        group: usize,
    },
}

impl FgqError {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Self::Format(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Self::Shape(msg.into())
    }
}
