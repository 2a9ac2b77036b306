//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point list: cannot build a raster from no points")]
    EmptyPoints,

    #[error("point {index} has a non-finite value or coordinate")]
    NonFinitePoint { index: usize },

    #[error("point {index} lies outside the grid")]
    PointOutOfGrid { index: usize },

    #[error("no masked-in cells available")]
    EmptyMask,

    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("raster geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("raster is smaller than the {window}x{window} patch window ({height}x{width})")]
    RasterTooSmall {
        height: usize,
        width: usize,
        window: usize,
    },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite gradient in layer `{layer}`")]
    NonFiniteGradient { layer: String },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
