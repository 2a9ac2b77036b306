//! Patch-based deep regression for field yield mapping.
//!
//! The crate covers the full desk-scale pipeline: masked multi-channel
//! rasters with point aggregation and min-max normalization, sliding-window
//! patch extraction, a 3D-2D convolutional network with hand-written forward
//! and backward passes, Adadelta training, overlap-averaged reconstruction of
//! full-field yield maps, and masked evaluation metrics (RMSE, RMedSE and
//! windowed SSIM). A procedural field generator and a linear-regression
//! baseline round out the toolkit.
//!
//! All numeric code is generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); the concrete aliases below pick the precision.

pub mod error;
pub mod frst;
pub mod mapgen;
pub mod metrics;
pub mod mlr;
pub mod net;
pub mod normalize;
pub mod raster;
pub mod render;
pub mod sampling;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision raster, the default for verification work.
pub type FieldRaster64 = raster::FieldRaster<f64>;
/// Single-precision raster, matching the on-disk payload exactly.
pub type FieldRaster32 = raster::FieldRaster<f32>;
/// Double-precision dense tensor.
pub type Tensor64 = tensor::Tensor<f64>;
/// Single-precision dense tensor.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision network.
pub type Network64 = net::Network<f64>;
/// Single-precision network.
pub type Network32 = net::Network<f32>;
