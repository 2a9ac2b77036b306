//! Scalar abstraction over the floating-point element type.

use ndarray::LinalgScalar;
use num_traits::{Float, NumAssignOps};

/// Floating-point element type for all numeric containers: `f32` or `f64`.
///
/// `LinalgScalar` is required so matrix products can run through ndarray's
/// tuned kernels regardless of precision. The conversion methods are named
/// to stay clear of the `num_traits` cast traits.
pub trait Scalar:
    Float
    + NumAssignOps
    + LinalgScalar
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_f32(v: f32) -> Self;
    fn as_f32(self) -> f32;

    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn from_f32(v: f32) -> Self {
        v
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}
