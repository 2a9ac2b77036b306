//! Dense row-major tensor with up to five axes.
//!
//! Axis conventions used by the network: `[batch, height, width, depth,
//! channels]` in the 3-D stage and `[batch, height, width, channels]` in the
//! 2-D stage. The last axis is always contiguous.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{linalg::general_mat_mul, ArrayView2, ArrayViewMut2};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "dims {:?} require {} values, got {}",
                dims,
                len,
                data.len()
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Flat offset of a multi-index (row-major).
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        for (i, &ix) in idx.iter().enumerate() {
            debug_assert!(ix < self.dims[i]);
            off = off * self.dims[i] + ix;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    /// Reinterpret the value buffer under new dimensions of equal length.
    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} ({} values) into {:?}",
                self.dims,
                self.data.len(),
                dims
            )));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c[m,n] += a * b` over contiguous row-major slices. `a` is stored as
/// `[m,k]` (or `[k,m]` when `transpose_a`), `b` as `[k,n]` (or `[n,k]` when
/// `transpose_b`).
#[allow(clippy::too_many_arguments)]
pub fn gemm_acc<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    transpose_a: bool,
    b: &[T],
    transpose_b: bool,
    c: &mut [T],
) {
    let a_view = if transpose_a {
        ArrayView2::from_shape((k, m), a)
            .expect("gemm lhs shape")
            .reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("gemm lhs shape")
    };
    let b_view = if transpose_b {
        ArrayView2::from_shape((n, k), b)
            .expect("gemm rhs shape")
            .reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("gemm rhs shape")
    };
    let mut c_view = ArrayViewMut2::from_shape((m, n), c).expect("gemm out shape");
    general_mat_mul(T::one(), &a_view, &b_view, T::one(), &mut c_view);
}
