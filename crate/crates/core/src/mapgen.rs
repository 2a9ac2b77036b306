//! Full-field yield map reconstruction by averaging overlapping predicted
//! patches.
//!
//! A window is centered on every masked-in cell (stride 1, unlike the
//! strided training extraction), the model's `N x N` output is accumulated
//! into the footprint centered on that cell, and each cell's final value is
//! its contribution average. Windows are batched through the predictor in
//! chunks; chunking is a throughput knob with no effect on the result, and
//! chunks are merged in scan order so reconstruction is deterministic for
//! any thread count.

use crate::error::{Error, Result};
use crate::net::checkpoint::Checkpoint;
use crate::raster::FieldRaster;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rayon::prelude::*;

pub const DEFAULT_CHUNK: usize = 64;

/// Anything that can turn a batch of input windows into predicted patches.
/// The window origins (top-left cells) ride along so test stubs can look up
/// ground truth.
pub trait PatchPredictor<T: Scalar>: Send + Sync {
    fn window(&self) -> usize;
    fn output(&self) -> usize;
    fn channels(&self) -> usize;
    /// `windows: [b, W, W, n]` -> `[b, N, N]` (or `[b, 1]` for N = 1).
    fn predict(&self, windows: &Tensor<T>, origins: &[(isize, isize)]) -> Result<Tensor<T>>;
}

/// The trained network behind a checkpoint. Expects feature windows that are
/// already normalized.
pub struct NetworkPredictor<'a, T> {
    pub checkpoint: &'a Checkpoint<T>,
}

impl<T: Scalar> PatchPredictor<T> for NetworkPredictor<'_, T> {
    fn window(&self) -> usize {
        self.checkpoint.config().window
    }

    fn output(&self) -> usize {
        self.checkpoint.config().output
    }

    fn channels(&self) -> usize {
        self.checkpoint.config().channels
    }

    fn predict(&self, windows: &Tensor<T>, _origins: &[(isize, isize)]) -> Result<Tensor<T>> {
        let &[b, w, w2, n] = windows.dims() else {
            return Err(Error::ShapeMismatch(format!(
                "expected 4-axis window batch, got {:?}",
                windows.dims()
            )));
        };
        let x = windows.clone().reshape(&[b, w, w2, n, 1])?;
        self.checkpoint.network.forward_eval(&x)
    }
}

/// Assemble the `W x W x n` input window whose top-left corner sits at
/// `(row0, col0)` (signed; outside cells and background read as zero).
fn fill_window<T: Scalar>(
    features: &FieldRaster<T>,
    row0: isize,
    col0: isize,
    window: usize,
    dst: &mut [T],
) {
    let channels = features.channels();
    let mut i = 0;
    for r in 0..window as isize {
        for c in 0..window as isize {
            for ch in 0..channels {
                dst[i] = features.input_value(row0 + r, col0 + c, ch);
                i += 1;
            }
        }
    }
}

/// Predict the full yield map. `features` must already be normalized with
/// the training normalizer. Returns the reconstructed map and the per-cell
/// contribution counts, both masked like the input field.
pub fn predict_map<T: Scalar>(
    predictor: &dyn PatchPredictor<T>,
    features: &FieldRaster<T>,
    chunk_size: usize,
) -> Result<(FieldRaster<T>, FieldRaster<T>)> {
    let window = predictor.window();
    let out = predictor.output();
    let channels = predictor.channels();
    if features.channels() != channels {
        return Err(Error::ChannelMismatch {
            expected: channels,
            got: features.channels(),
        });
    }
    let cells: Vec<(usize, usize)> = features.mask().iter_inside().collect();
    if cells.is_empty() {
        return Err(Error::EmptyMask);
    }
    let chunk_size = chunk_size.max(1);
    let half_w = (window / 2) as isize;
    let half_n = (out / 2) as isize;
    let (height, width) = (features.height(), features.width());

    // per chunk: list of (cell index, predicted value) contributions
    let contributions: Vec<Vec<(usize, T)>> = cells
        .par_chunks(chunk_size)
        .map(|chunk| -> Result<Vec<(usize, T)>> {
            let b = chunk.len();
            let mut windows = Tensor::zeros(&[b, window, window, channels]);
            let mut origins = Vec::with_capacity(b);
            let stride = window * window * channels;
            for (bi, &(row, col)) in chunk.iter().enumerate() {
                let (row0, col0) = (row as isize - half_w, col as isize - half_w);
                origins.push((row0, col0));
                fill_window(
                    features,
                    row0,
                    col0,
                    window,
                    &mut windows.data_mut()[bi * stride..(bi + 1) * stride],
                );
            }
            let pred = predictor.predict(&windows, &origins)?;
            let mut local = Vec::with_capacity(b * out * out);
            for (bi, &(row, col)) in chunk.iter().enumerate() {
                for i in 0..out as isize {
                    for j in 0..out as isize {
                        let (tr, tc) = (row as isize - half_n + i, col as isize - half_n + j);
                        if tr < 0 || tc < 0 || tr >= height as isize || tc >= width as isize {
                            continue;
                        }
                        let (tr, tc) = (tr as usize, tc as usize);
                        if !features.mask().get(tr, tc) {
                            continue;
                        }
                        let v = if out == 1 {
                            pred.at(&[bi, 0])
                        } else {
                            pred.at(&[bi, i as usize, j as usize])
                        };
                        local.push((tr * width + tc, v));
                    }
                }
            }
            Ok(local)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sums = vec![T::zero(); height * width];
    let mut counts = vec![0u32; height * width];
    for chunk in contributions {
        for (cell, v) in chunk {
            sums[cell] += v;
            counts[cell] += 1;
        }
    }

    let mut map = FieldRaster::new(height, width, 1, features.cell_size());
    let mut count_raster = FieldRaster::new(height, width, 1, features.cell_size());
    for &(row, col) in &cells {
        let cell = row * width + col;
        debug_assert!(counts[cell] > 0, "every masked-in cell hits its own window");
        map.set(row, col, 0, sums[cell] / T::from_usize(counts[cell] as usize));
        count_raster.set(row, col, 0, T::from_usize(counts[cell] as usize));
    }
    Ok((map, count_raster))
}

/// Per-cell squared error `(M - M_hat)^2` over the shared mask.
pub fn square_error_map<T: Scalar>(
    truth: &FieldRaster<T>,
    predicted: &FieldRaster<T>,
) -> Result<FieldRaster<T>> {
    if !truth.same_geometry(predicted) {
        return Err(Error::GeometryMismatch(format!(
            "{}x{} vs {}x{}",
            truth.height(),
            truth.width(),
            predicted.height(),
            predicted.width()
        )));
    }
    let mut out = FieldRaster::new(truth.height(), truth.width(), 1, truth.cell_size());
    for (row, col) in truth.mask().iter_inside() {
        if !predicted.mask().get(row, col) {
            continue;
        }
        let d = truth.get(row, col, 0) - predicted.get(row, col, 0);
        out.set(row, col, 0, d * d);
    }
    Ok(out)
}

pub mod stubs {
    //! Reference predictors for exercising the reconstruction machinery
    //! without a trained network; used by the unit and acceptance suites.
    use super::*;
    use std::sync::Mutex;

    /// Always predicts the same value everywhere.
    pub struct ConstantStub {
        pub value: f64,
        pub window: usize,
        pub output: usize,
        pub channels: usize,
    }

    impl PatchPredictor<f64> for ConstantStub {
        fn window(&self) -> usize {
            self.window
        }
        fn output(&self) -> usize {
            self.output
        }
        fn channels(&self) -> usize {
            self.channels
        }
        fn predict(&self, windows: &Tensor<f64>, _origins: &[(isize, isize)]) -> Result<Tensor<f64>> {
            let b = windows.dims()[0];
            let dims: Vec<usize> = if self.output == 1 {
                vec![b, 1]
            } else {
                vec![b, self.output, self.output]
            };
            Ok(Tensor::from_vec(
                &dims,
                vec![self.value; dims.iter().product()],
            )
            .unwrap())
        }
    }

    /// Looks up the true yield footprint and optionally adds seeded noise.
    /// A deterministic hash of (origin, trial) seeds each patch so results
    /// are reproducible yet independent across placements and trials.
    pub struct TruthStub<'a> {
        pub truth: &'a FieldRaster<f64>,
        pub window: usize,
        pub output: usize,
        pub channels: usize,
        pub sigma: f64,
        pub trial: u64,
    }

    impl PatchPredictor<f64> for TruthStub<'_> {
        fn window(&self) -> usize {
            self.window
        }
        fn output(&self) -> usize {
            self.output
        }
        fn channels(&self) -> usize {
            self.channels
        }
        fn predict(&self, windows: &Tensor<f64>, origins: &[(isize, isize)]) -> Result<Tensor<f64>> {
            use rand::SeedableRng;
            use rand_chacha::ChaCha8Rng;
            use rand_distr::{Distribution, Normal};
            let b = windows.dims()[0];
            let offset = ((self.window - self.output) / 2) as isize;
            let dims: Vec<usize> = if self.output == 1 {
                vec![b, 1]
            } else {
                vec![b, self.output, self.output]
            };
            let mut out = Tensor::zeros(&dims);
            let normal = Normal::new(0.0, self.sigma.max(1e-300)).unwrap();
            for (bi, &(r0, c0)) in origins.iter().enumerate() {
                let seed = (self.trial << 32)
                    ^ ((r0 as u64 & 0xffff) << 16)
                    ^ (c0 as u64 & 0xffff);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for i in 0..self.output {
                    for j in 0..self.output {
                        let (tr, tc) = (r0 + offset + i as isize, c0 + offset + j as isize);
                        let base = self.truth.input_value(tr, tc, 0);
                        let noise = if self.sigma > 0.0 {
                            normal.sample(&mut rng)
                        } else {
                            0.0
                        };
                        let idx = bi * self.output * self.output + i * self.output + j;
                        out.data_mut()[idx] = base + noise;
                    }
                }
            }
            Ok(out)
        }
    }

    /// Records every origin it is asked about; prediction is origin-hashed
    /// pseudo-random noise, the workload for the brute-force oracle test.
    pub struct HashStub {
        pub window: usize,
        pub output: usize,
        pub channels: usize,
        pub seen: Mutex<Vec<(isize, isize)>>,
    }

    pub fn hash_prediction(r0: isize, c0: isize, i: usize, j: usize) -> f64 {
        let mut h = (r0 as i64 * 73_856_093) ^ (c0 as i64 * 19_349_663);
        h ^= (i as i64) << 40;
        h ^= (j as i64) << 20;
        let v = (h.wrapping_mul(2_654_435_761) & 0xffff) as f64;
        v / 655.36
    }

    impl PatchPredictor<f64> for HashStub {
        fn window(&self) -> usize {
            self.window
        }
        fn output(&self) -> usize {
            self.output
        }
        fn channels(&self) -> usize {
            self.channels
        }
        fn predict(&self, windows: &Tensor<f64>, origins: &[(isize, isize)]) -> Result<Tensor<f64>> {
            let b = windows.dims()[0];
            self.seen.lock().unwrap().extend_from_slice(origins);
            let dims: Vec<usize> = if self.output == 1 {
                vec![b, 1]
            } else {
                vec![b, self.output, self.output]
            };
            let mut out = Tensor::zeros(&dims);
            for (bi, &(r0, c0)) in origins.iter().enumerate() {
                for i in 0..self.output {
                    for j in 0..self.output {
                        let idx = bi * self.output * self.output + i * self.output + j;
                        out.data_mut()[idx] = hash_prediction(r0, c0, i, j);
                    }
                }
            }
            Ok(out)
        }
    }
}
