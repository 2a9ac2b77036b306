//! Layer primitives with explicit forward and backward passes.
//!
//! Convolutions run as im2col plus a matrix product so the heavy work lands
//! in tuned GEMM kernels; the unit tests check each layer against plain
//! nested-loop oracles. All convolutions use stride 1. The 3-D and the
//! separable 2-D convolutions use same-padding of one cell per spatial (and
//! depth) axis.

use crate::scalar::Scalar;
use crate::tensor::{gemm_acc, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

pub fn relu<T: Scalar>(z: &Tensor<T>) -> Tensor<T> {
    z.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Propagate through ReLU given the preactivation `z`.
pub fn relu_backward<T: Scalar>(z: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(z.dims(), dy.dims());
    let data = z
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&zv, &dv)| if zv > T::zero() { dv } else { T::zero() })
        .collect();
    Tensor::from_vec(dy.dims(), data).expect("relu shapes")
}

// ---------------------------------------------------------------------------
// Dropout (inverted: survivors are scaled at train time, eval is identity)
// ---------------------------------------------------------------------------

pub fn dropout_forward<T: Scalar>(
    x: &Tensor<T>,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> (Tensor<T>, Vec<bool>) {
    if rate == 0.0 {
        return (x.clone(), vec![true; x.len()]);
    }
    let keep = 1.0 - rate;
    let scale = T::from_f64(1.0 / keep);
    let mut mask = vec![false; x.len()];
    let mut data = vec![T::zero(); x.len()];
    for (i, &v) in x.data().iter().enumerate() {
        if rng.random::<f64>() < keep {
            mask[i] = true;
            data[i] = v * scale;
        }
    }
    (Tensor::from_vec(x.dims(), data).expect("dropout shape"), mask)
}

pub fn dropout_backward<T: Scalar>(dy: &Tensor<T>, mask: &[bool], rate: f64) -> Tensor<T> {
    let scale = T::from_f64(1.0 / (1.0 - rate));
    let data = dy
        .data()
        .iter()
        .zip(mask)
        .map(|(&d, &m)| if m { d * scale } else { T::zero() })
        .collect();
    Tensor::from_vec(dy.dims(), data).expect("dropout shape")
}

// ---------------------------------------------------------------------------
// Channel concatenation along the last axis
// ---------------------------------------------------------------------------

pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (da, db) = (a.dims(), b.dims());
    assert_eq!(da.len(), db.len(), "concat rank mismatch");
    assert_eq!(
        &da[..da.len() - 1],
        &db[..db.len() - 1],
        "concat needs equal non-channel axes: {da:?} vs {db:?}"
    );
    let (ca, cb) = (da[da.len() - 1], db[db.len() - 1]);
    let rows = a.len() / ca;
    let mut dims = da.to_vec();
    *dims.last_mut().unwrap() = ca + cb;
    let mut data = Vec::with_capacity(rows * (ca + cb));
    for r in 0..rows {
        data.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
        data.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
    }
    Tensor::from_vec(&dims, data).expect("concat shape")
}

/// Undo [`concat_channels`]: split the last axis at `ca`.
pub fn split_channels<T: Scalar>(d: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let dims = d.dims();
    let c = dims[dims.len() - 1];
    assert!(ca < c);
    let cb = c - ca;
    let rows = d.len() / c;
    let mut da = Vec::with_capacity(rows * ca);
    let mut db = Vec::with_capacity(rows * cb);
    for r in 0..rows {
        da.extend_from_slice(&d.data()[r * c..r * c + ca]);
        db.extend_from_slice(&d.data()[r * c + ca..(r + 1) * c]);
    }
    let mut dims_a = dims.to_vec();
    *dims_a.last_mut().unwrap() = ca;
    let mut dims_b = dims.to_vec();
    *dims_b.last_mut().unwrap() = cb;
    (
        Tensor::from_vec(&dims_a, da).expect("split shape"),
        Tensor::from_vec(&dims_b, db).expect("split shape"),
    )
}

// ---------------------------------------------------------------------------
// 3-D convolution, kernel (3,3,3), padding (1,1,1), stride 1
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Conv3d<T> {
    /// `[3, 3, 3, c_in, c_out]`
    pub kernel: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv3d<T> {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Conv3d {
            kernel: Tensor::zeros(&[3, 3, 3, c_in, c_out]),
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn c_in(&self) -> usize {
        self.kernel.dims()[3]
    }

    pub fn c_out(&self) -> usize {
        self.kernel.dims()[4]
    }

    pub fn param_count(c_in: usize, c_out: usize) -> usize {
        27 * c_in * c_out + c_out
    }

    /// `[b, h, w, d, c_in] -> [b, h, w, d, c_out]`.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let &[b, h, w, d, c_in] = x.dims() else {
            panic!("conv3d expects a 5-axis input, got {:?}", x.dims());
        };
        assert_eq!(c_in, self.c_in(), "conv3d channel mismatch");
        let c_out = self.c_out();
        let positions = h * w * d;
        let k = 27 * c_in;
        let mut col = vec![T::zero(); positions * k];
        let mut out = Tensor::zeros(&[b, h, w, d, c_out]);
        for bi in 0..b {
            im2col_3d(x, bi, &mut col);
            let out_slice =
                &mut out.data_mut()[bi * positions * c_out..(bi + 1) * positions * c_out];
            for chunk in out_slice.chunks_exact_mut(c_out) {
                chunk.copy_from_slice(&self.bias);
            }
            gemm_acc(
                positions,
                k,
                c_out,
                &col,
                false,
                self.kernel.data(),
                false,
                out_slice,
            );
        }
        out
    }

    /// Returns `(d_kernel, d_bias, d_input)`.
    pub fn backward(&self, x: &Tensor<T>, dout: &Tensor<T>) -> (Tensor<T>, Vec<T>, Tensor<T>) {
        let &[b, h, w, d, c_in] = x.dims() else {
            panic!("conv3d expects a 5-axis input");
        };
        let c_out = self.c_out();
        assert_eq!(dout.dims(), &[b, h, w, d, c_out]);
        let positions = h * w * d;
        let k = 27 * c_in;

        let mut d_kernel = Tensor::zeros(&[3, 3, 3, c_in, c_out]);
        let mut d_bias = vec![T::zero(); c_out];
        let mut dx = Tensor::zeros(x.dims());
        let mut col = vec![T::zero(); positions * k];
        let mut dcol = vec![T::zero(); positions * k];

        for bi in 0..b {
            let dout_slice = &dout.data()[bi * positions * c_out..(bi + 1) * positions * c_out];
            for chunk in dout_slice.chunks_exact(c_out) {
                for (acc, &g) in d_bias.iter_mut().zip(chunk) {
                    *acc += g;
                }
            }
            im2col_3d(x, bi, &mut col);
            // d_kernel += col^T . dout
            gemm_acc(
                k,
                positions,
                c_out,
                &col,
                true,
                dout_slice,
                false,
                d_kernel.data_mut(),
            );
            // dcol = dout . kernel^T
            dcol.iter_mut().for_each(|v| *v = T::zero());
            gemm_acc(
                positions,
                c_out,
                k,
                dout_slice,
                false,
                self.kernel.data(),
                true,
                &mut dcol,
            );
            col2im_3d(&dcol, bi, &mut dx);
        }
        (d_kernel, d_bias, dx)
    }
}

/// Gather the padded 3x3x3 neighborhoods of one sample into `col`
/// (`positions x 27*c_in`, rows in (h, w, d) scan order, columns ordered
/// (kh, kw, kd, c_in)).
fn im2col_3d<T: Scalar>(x: &Tensor<T>, batch: usize, col: &mut [T]) {
    let &[_, h, w, d, c_in] = x.dims() else { unreachable!() };
    let sample = &x.data()[batch * h * w * d * c_in..(batch + 1) * h * w * d * c_in];
    let mut dst = 0;
    for y in 0..h as isize {
        for xx in 0..w as isize {
            for z in 0..d as isize {
                for ky in -1..=1isize {
                    for kx in -1..=1isize {
                        for kz in -1..=1isize {
                            let (sy, sx, sz) = (y + ky, xx + kx, z + kz);
                            let slot = &mut col[dst..dst + c_in];
                            if sy >= 0
                                && sx >= 0
                                && sz >= 0
                                && sy < h as isize
                                && sx < w as isize
                                && sz < d as isize
                            {
                                let src =
                                    (((sy as usize * w) + sx as usize) * d + sz as usize) * c_in;
                                slot.copy_from_slice(&sample[src..src + c_in]);
                            } else {
                                slot.fill(T::zero());
                            }
                            dst += c_in;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add of the column gradient back onto the input, reversing
/// [`im2col_3d`].
fn col2im_3d<T: Scalar>(dcol: &[T], batch: usize, dx: &mut Tensor<T>) {
    let &[_, h, w, d, c_in] = dx.dims() else { unreachable!() };
    let sample_len = h * w * d * c_in;
    let sample = &mut dx.data_mut()[batch * sample_len..(batch + 1) * sample_len];
    let mut src = 0;
    for y in 0..h as isize {
        for xx in 0..w as isize {
            for z in 0..d as isize {
                for ky in -1..=1isize {
                    for kx in -1..=1isize {
                        for kz in -1..=1isize {
                            let (sy, sx, sz) = (y + ky, xx + kx, z + kz);
                            if sy >= 0
                                && sx >= 0
                                && sz >= 0
                                && sy < h as isize
                                && sx < w as isize
                                && sz < d as isize
                            {
                                let dst =
                                    (((sy as usize * w) + sx as usize) * d + sz as usize) * c_in;
                                for ci in 0..c_in {
                                    sample[dst + ci] += dcol[src + ci];
                                }
                            }
                            src += c_in;
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Depthwise-separable 2-D convolution: depthwise 3x3 (multiplier 1, no bias)
// followed by a pointwise 1x1 with bias
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SepConv2d<T> {
    /// `[3, 3, c_in]`
    pub depthwise: Tensor<T>,
    /// `[c_in, c_out]`
    pub pointwise: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> SepConv2d<T> {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        SepConv2d {
            depthwise: Tensor::zeros(&[3, 3, c_in]),
            pointwise: Tensor::zeros(&[c_in, c_out]),
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn c_in(&self) -> usize {
        self.pointwise.dims()[0]
    }

    pub fn c_out(&self) -> usize {
        self.pointwise.dims()[1]
    }

    pub fn param_count(c_in: usize, c_out: usize) -> usize {
        9 * c_in + c_in * c_out + c_out
    }

    /// Depthwise stage only: `[b, h, w, c] -> [b, h, w, c]`, same padding.
    pub fn depthwise_forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let &[b, h, w, c] = x.dims() else {
            panic!("sepconv expects a 4-axis input, got {:?}", x.dims());
        };
        assert_eq!(c, self.c_in(), "sepconv channel mismatch");
        let mut mid = Tensor::zeros(&[b, h, w, c]);
        let dw = self.depthwise.data();
        for bi in 0..b {
            let sample = &x.data()[bi * h * w * c..(bi + 1) * h * w * c];
            let out = &mut mid.data_mut()[bi * h * w * c..(bi + 1) * h * w * c];
            for y in 0..h as isize {
                for xx in 0..w as isize {
                    let dst = ((y as usize * w) + xx as usize) * c;
                    for ky in -1..=1isize {
                        let sy = y + ky;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in -1..=1isize {
                            let sx = xx + kx;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = ((sy as usize * w) + sx as usize) * c;
                            let tap = (((ky + 1) * 3 + (kx + 1)) as usize) * c;
                            for ci in 0..c {
                                out[dst + ci] += sample[src + ci] * dw[tap + ci];
                            }
                        }
                    }
                }
            }
        }
        mid
    }

    /// Full separable pass; returns the output and the depthwise intermediate
    /// needed by the backward pass.
    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
        let &[b, h, w, _] = x.dims() else {
            panic!("sepconv expects a 4-axis input");
        };
        let mid = self.depthwise_forward(x);
        let c_out = self.c_out();
        let rows = b * h * w;
        let mut out = Tensor::zeros(&[b, h, w, c_out]);
        for chunk in out.data_mut().chunks_exact_mut(c_out) {
            chunk.copy_from_slice(&self.bias);
        }
        gemm_acc(
            rows,
            self.c_in(),
            c_out,
            mid.data(),
            false,
            self.pointwise.data(),
            false,
            out.data_mut(),
        );
        (out, mid)
    }

    /// Returns `(d_depthwise, d_pointwise, d_bias, d_input)`.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        mid: &Tensor<T>,
        dout: &Tensor<T>,
    ) -> (Tensor<T>, Tensor<T>, Vec<T>, Tensor<T>) {
        let &[b, h, w, c_in] = x.dims() else {
            panic!("sepconv expects a 4-axis input");
        };
        let c_out = self.c_out();
        let rows = b * h * w;
        assert_eq!(dout.dims(), &[b, h, w, c_out]);

        let mut d_bias = vec![T::zero(); c_out];
        for chunk in dout.data().chunks_exact(c_out) {
            for (acc, &g) in d_bias.iter_mut().zip(chunk) {
                *acc += g;
            }
        }
        // d_pointwise += mid^T . dout
        let mut d_pointwise = Tensor::zeros(&[c_in, c_out]);
        gemm_acc(
            c_in,
            rows,
            c_out,
            mid.data(),
            true,
            dout.data(),
            false,
            d_pointwise.data_mut(),
        );
        // dmid = dout . pointwise^T
        let mut dmid = Tensor::zeros(&[b, h, w, c_in]);
        gemm_acc(
            rows,
            c_out,
            c_in,
            dout.data(),
            false,
            self.pointwise.data(),
            true,
            dmid.data_mut(),
        );

        // depthwise stage
        let mut d_depthwise = Tensor::zeros(&[3, 3, c_in]);
        let mut dx = Tensor::zeros(x.dims());
        let dw = self.depthwise.data();
        for bi in 0..b {
            let sample = &x.data()[bi * h * w * c_in..(bi + 1) * h * w * c_in];
            let dmid_s = &dmid.data()[bi * h * w * c_in..(bi + 1) * h * w * c_in];
            let dx_s = &mut dx.data_mut()[bi * h * w * c_in..(bi + 1) * h * w * c_in];
            for y in 0..h as isize {
                for xx in 0..w as isize {
                    let at = ((y as usize * w) + xx as usize) * c_in;
                    for ky in -1..=1isize {
                        let sy = y + ky;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in -1..=1isize {
                            let sx = xx + kx;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = ((sy as usize * w) + sx as usize) * c_in;
                            let tap = (((ky + 1) * 3 + (kx + 1)) as usize) * c_in;
                            let dwk = &mut d_depthwise.data_mut()[tap..tap + c_in];
                            for ci in 0..c_in {
                                dwk[ci] += sample[src + ci] * dmid_s[at + ci];
                                dx_s[src + ci] += dw[tap + ci] * dmid_s[at + ci];
                            }
                        }
                    }
                }
            }
        }
        (d_depthwise, d_pointwise, d_bias, dx)
    }
}

// ---------------------------------------------------------------------------
// Plain 2-D convolution (the head), kernel (3,3), padding 1 or 0
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    /// `[3, 3, c_in, c_out]`
    pub kernel: Tensor<T>,
    pub bias: Vec<T>,
    pub padding: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(c_in: usize, c_out: usize, padding: usize) -> Self {
        Conv2d {
            kernel: Tensor::zeros(&[3, 3, c_in, c_out]),
            bias: vec![T::zero(); c_out],
            padding,
        }
    }

    pub fn c_in(&self) -> usize {
        self.kernel.dims()[2]
    }

    pub fn c_out(&self) -> usize {
        self.kernel.dims()[3]
    }

    pub fn param_count(c_in: usize, c_out: usize) -> usize {
        9 * c_in * c_out + c_out
    }

    pub fn out_size(&self, h: usize) -> usize {
        h + 2 * self.padding - 2
    }

    /// `[b, h, w, c_in] -> [b, h_out, w_out, c_out]`.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let &[b, h, w, c_in] = x.dims() else {
            panic!("conv2d expects a 4-axis input, got {:?}", x.dims());
        };
        assert_eq!(c_in, self.c_in());
        let c_out = self.c_out();
        let (ho, wo) = (self.out_size(h), self.out_size(w));
        let p = self.padding as isize;
        let mut out = Tensor::zeros(&[b, ho, wo, c_out]);
        let ker = self.kernel.data();
        for bi in 0..b {
            let sample = &x.data()[bi * h * w * c_in..(bi + 1) * h * w * c_in];
            let out_s = &mut out.data_mut()[bi * ho * wo * c_out..(bi + 1) * ho * wo * c_out];
            for oy in 0..ho {
                for ox in 0..wo {
                    let dst = (oy * wo + ox) * c_out;
                    out_s[dst..dst + c_out].copy_from_slice(&self.bias);
                    for ky in 0..3isize {
                        let sy = oy as isize + ky - p;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3isize {
                            let sx = ox as isize + kx - p;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = ((sy as usize * w) + sx as usize) * c_in;
                            let tap = ((ky * 3 + kx) as usize) * c_in * c_out;
                            for ci in 0..c_in {
                                let xv = sample[src + ci];
                                let kr = &ker[tap + ci * c_out..tap + (ci + 1) * c_out];
                                for co in 0..c_out {
                                    out_s[dst + co] += xv * kr[co];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Returns `(d_kernel, d_bias, d_input)`.
    pub fn backward(&self, x: &Tensor<T>, dout: &Tensor<T>) -> (Tensor<T>, Vec<T>, Tensor<T>) {
        let &[b, h, w, c_in] = x.dims() else {
            panic!("conv2d expects a 4-axis input");
        };
        let c_out = self.c_out();
        let (ho, wo) = (self.out_size(h), self.out_size(w));
        assert_eq!(dout.dims(), &[b, ho, wo, c_out]);
        let p = self.padding as isize;

        let mut d_kernel = Tensor::zeros(&[3, 3, c_in, c_out]);
        let mut d_bias = vec![T::zero(); c_out];
        let mut dx = Tensor::zeros(x.dims());
        let ker = self.kernel.data();
        for bi in 0..b {
            let sample = &x.data()[bi * h * w * c_in..(bi + 1) * h * w * c_in];
            let dout_s = &dout.data()[bi * ho * wo * c_out..(bi + 1) * ho * wo * c_out];
            let dx_s = &mut dx.data_mut()[bi * h * w * c_in..(bi + 1) * h * w * c_in];
            for oy in 0..ho {
                for ox in 0..wo {
                    let g = &dout_s[(oy * wo + ox) * c_out..(oy * wo + ox + 1) * c_out];
                    for (acc, &gv) in d_bias.iter_mut().zip(g) {
                        *acc += gv;
                    }
                    for ky in 0..3isize {
                        let sy = oy as isize + ky - p;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3isize {
                            let sx = ox as isize + kx - p;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = ((sy as usize * w) + sx as usize) * c_in;
                            let tap = ((ky * 3 + kx) as usize) * c_in * c_out;
                            for ci in 0..c_in {
                                let xv = sample[src + ci];
                                let kr = &ker[tap + ci * c_out..tap + (ci + 1) * c_out];
                                let dkr = &mut d_kernel.data_mut()
                                    [tap + ci * c_out..tap + (ci + 1) * c_out];
                                let mut dxv = T::zero();
                                for co in 0..c_out {
                                    dkr[co] += xv * g[co];
                                    dxv += kr[co] * g[co];
                                }
                                dx_s[src + ci] += dxv;
                            }
                        }
                    }
                }
            }
        }
        (d_kernel, d_bias, dx)
    }
}

// ---------------------------------------------------------------------------
// Batch normalization over the last (channel) axis
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

/// Batch statistics captured by a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        BatchNorm {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum,
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Two-pass batch mean and population variance per channel.
    pub fn batch_stats(&self, x: &Tensor<T>) -> BnCache<T> {
        let c = self.channels();
        let m = x.len() / c;
        let mf = T::from_usize(m);
        let mut mean = vec![T::zero(); c];
        for chunk in x.data().chunks_exact(c) {
            for (acc, &v) in mean.iter_mut().zip(chunk) {
                *acc += v;
            }
        }
        for v in &mut mean {
            *v /= mf;
        }
        let mut var = vec![T::zero(); c];
        for chunk in x.data().chunks_exact(c) {
            for ((acc, &v), &mu) in var.iter_mut().zip(chunk).zip(&mean) {
                let d = v - mu;
                *acc += d * d;
            }
        }
        for v in &mut var {
            *v /= mf;
        }
        BnCache { mean, var }
    }

    /// Train-mode forward. Pure: running statistics are committed separately
    /// via [`BatchNorm::update_running`].
    pub fn forward_train(&self, x: &Tensor<T>) -> (Tensor<T>, BnCache<T>) {
        let cache = self.batch_stats(x);
        let y = self.normalize(x, &cache.mean, &cache.var);
        (y, cache)
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Tensor<T> {
        self.normalize(x, &self.running_mean, &self.running_var)
    }

    fn normalize(&self, x: &Tensor<T>, mean: &[T], var: &[T]) -> Tensor<T> {
        let c = self.channels();
        let eps = T::from_f64(self.eps);
        let inv_std: Vec<T> = var.iter().map(|&v| (v + eps).sqrt().recip()).collect();
        let mut out = Tensor::zeros(x.dims());
        for (src, dst) in x
            .data()
            .chunks_exact(c)
            .zip(out.data_mut().chunks_exact_mut(c))
        {
            for ci in 0..c {
                dst[ci] = (src[ci] - mean[ci]) * inv_std[ci] * self.gamma[ci] + self.beta[ci];
            }
        }
        out
    }

    /// `r <- momentum * r + (1 - momentum) * batch_stat`.
    pub fn update_running(&mut self, cache: &BnCache<T>) {
        let mom = T::from_f64(self.momentum);
        let one_m = T::one() - mom;
        for ci in 0..self.channels() {
            self.running_mean[ci] = mom * self.running_mean[ci] + one_m * cache.mean[ci];
            self.running_var[ci] = mom * self.running_var[ci] + one_m * cache.var[ci];
        }
    }

    /// Train-mode backward through the batch statistics.
    /// Returns `(d_gamma, d_beta, d_input)`.
    pub fn backward_train(
        &self,
        x: &Tensor<T>,
        cache: &BnCache<T>,
        dy: &Tensor<T>,
    ) -> (Vec<T>, Vec<T>, Tensor<T>) {
        let c = self.channels();
        let m = x.len() / c;
        let mf = T::from_usize(m);
        let eps = T::from_f64(self.eps);
        let inv_std: Vec<T> = cache.var.iter().map(|&v| (v + eps).sqrt().recip()).collect();

        let mut d_gamma = vec![T::zero(); c];
        let mut d_beta = vec![T::zero(); c];
        let mut d_var = vec![T::zero(); c];
        let mut d_mean = vec![T::zero(); c];
        let mut sum_center = vec![T::zero(); c];

        for (xs, ds) in x.data().chunks_exact(c).zip(dy.data().chunks_exact(c)) {
            for ci in 0..c {
                let centered = xs[ci] - cache.mean[ci];
                let xhat = centered * inv_std[ci];
                d_gamma[ci] += ds[ci] * xhat;
                d_beta[ci] += ds[ci];
                let dxhat = ds[ci] * self.gamma[ci];
                let half = T::from_f64(0.5);
                d_var[ci] += dxhat * centered * (-half) * inv_std[ci].powi(3);
                d_mean[ci] += -dxhat * inv_std[ci];
                sum_center[ci] += centered;
            }
        }
        let two = T::from_f64(2.0);
        for ci in 0..c {
            d_mean[ci] += d_var[ci] * (-two) * sum_center[ci] / mf;
        }

        let mut dx = Tensor::zeros(x.dims());
        for ((xs, ds), dst) in x
            .data()
            .chunks_exact(c)
            .zip(dy.data().chunks_exact(c))
            .zip(dx.data_mut().chunks_exact_mut(c))
        {
            for ci in 0..c {
                let centered = xs[ci] - cache.mean[ci];
                let dxhat = ds[ci] * self.gamma[ci];
                dst[ci] =
                    dxhat * inv_std[ci] + d_var[ci] * two * centered / mf + d_mean[ci] / mf;
            }
        }
        (d_gamma, d_beta, dx)
    }
}

// ---------------------------------------------------------------------------
// Bias-free fully-connected layer (the N=1 head tail, 9 -> 1)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct DenseNoBias<T> {
    /// One weight per input feature.
    pub weights: Vec<T>,
}

impl<T: Scalar> DenseNoBias<T> {
    pub fn zeros(inputs: usize) -> Self {
        DenseNoBias {
            weights: vec![T::zero(); inputs],
        }
    }

    /// `[b, k] -> [b, 1]`.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let &[b, k] = x.dims() else {
            panic!("dense expects a 2-axis input, got {:?}", x.dims());
        };
        assert_eq!(k, self.weights.len());
        let mut out = Tensor::zeros(&[b, 1]);
        for (bi, row) in x.data().chunks_exact(k).enumerate() {
            let mut acc = T::zero();
            for (xv, wv) in row.iter().zip(&self.weights) {
                acc += *xv * *wv;
            }
            out.data_mut()[bi] = acc;
        }
        out
    }

    /// Returns `(d_weights, d_input)`.
    pub fn backward(&self, x: &Tensor<T>, dout: &Tensor<T>) -> (Vec<T>, Tensor<T>) {
        let &[b, k] = x.dims() else {
            panic!("dense expects a 2-axis input");
        };
        assert_eq!(dout.dims(), &[b, 1]);
        let mut dw = vec![T::zero(); k];
        let mut dx = Tensor::zeros(&[b, k]);
        for bi in 0..b {
            let g = dout.data()[bi];
            let row = &x.data()[bi * k..(bi + 1) * k];
            let drow = &mut dx.data_mut()[bi * k..(bi + 1) * k];
            for ci in 0..k {
                dw[ci] += row[ci] * g;
                drow[ci] = self.weights[ci] * g;
            }
        }
        (dw, dx)
    }
}
