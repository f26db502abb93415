use std::fmt;

/// Error type shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("degenerate embedding: row {row} has norm {norm:e}")]
    DegenerateEmbedding { row: usize, norm: f64 },

    #[error("index error in {op}: index {index} out of range for bound {bound}")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("graph/config mismatch: {0}")]
    GraphMismatch(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl fmt::Display) -> Error {
    Error::Shape {
        op,
        detail: detail.to_string(),
    }
}
