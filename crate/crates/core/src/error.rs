use thiserror::Error;

use crate::model::TtnLayout;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "contraction shape mismatch: axis {axis_a} of a has length {len_a}, axis {axis_b} of b has length {len_b}"
    )]
    ContractionShape {
        axis_a: usize,
        axis_b: usize,
        len_a: usize,
        len_b: usize,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("layout error: {0}")]
    Layout(String),

    #[error("layout mismatch: expected {expected}, found {found}")]
    LayoutMismatch { expected: TtnLayout, found: TtnLayout },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("cache built for model revision {cache_revision} but model is at revision {model_revision}")]
    CacheInvalid { cache_revision: u64, model_revision: u64 },

    #[error("tensor ({layer},{index}) is not an isometry: max deviation {deviation:e}")]
    NotIsometric { layer: usize, index: usize, deviation: f64 },

    #[error("numeric failure in sweep {sweep}: {message}")]
    NumericFailure { sweep: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
