//! Multiple linear regression baseline: one cell's feature vector in, one
//! yield value out.
//!
//! Fitting solves the normal equations by Cholesky factorization in double
//! precision. A rank-deficient Gram matrix (e.g. a constant feature column
//! colliding with the intercept) falls back to ridge with lambda = 1e-8 and
//! flags the model so callers can warn.

use crate::error::{Error, Result};
use crate::raster::{FieldRaster, CHANNEL_NAMES};
use crate::scalar::Scalar;

pub const RIDGE_LAMBDA: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct MlrModel<T> {
    pub coefficients: Vec<T>,
    pub intercept: T,
    /// Set when the fit needed the ridge fallback.
    pub used_ridge: bool,
}

/// Ordinary least squares over `(features, yield)` rows.
pub fn fit_mlr<T: Scalar>(features: &[Vec<T>], targets: &[T]) -> Result<MlrModel<T>> {
    let k = features.len();
    if k == 0 || k != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows vs {} targets",
            k,
            targets.len()
        )));
    }
    let n = features[0].len();
    if features.iter().any(|row| row.len() != n) {
        return Err(Error::ShapeMismatch("ragged feature rows".to_string()));
    }
    if k < n + 1 {
        return Err(Error::TooFewSamples { got: k, need: n + 1 });
    }

    // Gram matrix and right-hand side of the normal equations, with the
    // intercept as column 0
    let dim = n + 1;
    let mut gram = vec![0.0f64; dim * dim];
    let mut rhs = vec![0.0f64; dim];
    let mut row_buf = vec![0.0f64; dim];
    for (row, &target) in features.iter().zip(targets) {
        row_buf[0] = 1.0;
        for (i, v) in row.iter().enumerate() {
            row_buf[i + 1] = v.as_f64();
        }
        let y = target.as_f64();
        for i in 0..dim {
            rhs[i] += row_buf[i] * y;
            for j in i..dim {
                gram[i * dim + j] += row_buf[i] * row_buf[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            gram[i * dim + j] = gram[j * dim + i];
        }
    }

    let (beta, used_ridge) = match cholesky_solve(&gram, &rhs, dim) {
        Some(beta) => (beta, false),
        None => {
            let mut ridge = gram.clone();
            for i in 0..dim {
                ridge[i * dim + i] += RIDGE_LAMBDA;
            }
            let beta = cholesky_solve(&ridge, &rhs, dim).ok_or_else(|| {
                Error::InvalidConfig("normal equations unsolvable even with ridge".into())
            })?;
            (beta, true)
        }
    };

    Ok(MlrModel {
        intercept: T::from_f64(beta[0]),
        coefficients: beta[1..].iter().map(|&v| T::from_f64(v)).collect(),
        used_ridge,
    })
}

/// Cholesky factorization + solve; `None` when the matrix is not (numerically)
/// positive definite.
fn cholesky_solve(a: &[f64], b: &[f64], dim: usize) -> Option<Vec<f64>> {
    let scale = (0..dim).map(|i| a[i * dim + i]).fold(0.0f64, f64::max);
    let tol = scale.max(1.0) * 1e-12;
    let mut l = vec![0.0f64; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if sum <= tol {
                    return None;
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    // forward then backward substitution
    let mut y = vec![0.0f64; dim];
    for i in 0..dim {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * dim + k] * y[k];
        }
        y[i] = sum / l[i * dim + i];
    }
    let mut x = vec![0.0f64; dim];
    for i in (0..dim).rev() {
        let mut sum = y[i];
        for k in i + 1..dim {
            sum -= l[k * dim + i] * x[k];
        }
        x[i] = sum / l[i * dim + i];
    }
    Some(x)
}

/// Dot product plus intercept, clamped at zero (yield is non-negative).
pub fn predict_mlr<T: Scalar>(model: &MlrModel<T>, features: &[T]) -> Result<T> {
    if features.len() != model.coefficients.len() {
        return Err(Error::ChannelMismatch {
            expected: model.coefficients.len(),
            got: features.len(),
        });
    }
    let mut acc = model.intercept;
    for (c, v) in model.coefficients.iter().zip(features) {
        acc += *c * *v;
    }
    Ok(acc.max(T::zero()))
}

/// Raw (pre-clamp) affine response, for linearity checks.
pub fn predict_mlr_raw<T: Scalar>(model: &MlrModel<T>, features: &[T]) -> Result<T> {
    if features.len() != model.coefficients.len() {
        return Err(Error::ChannelMismatch {
            expected: model.coefficients.len(),
            got: features.len(),
        });
    }
    let mut acc = model.intercept;
    for (c, v) in model.coefficients.iter().zip(features) {
        acc += *c * *v;
    }
    Ok(acc)
}

/// Per-cell scalar prediction over a field: the single-output analogue of the
/// network map generation.
pub fn predict_mlr_map<T: Scalar>(
    model: &MlrModel<T>,
    features: &FieldRaster<T>,
) -> Result<FieldRaster<T>> {
    if features.channels() != model.coefficients.len() {
        return Err(Error::ChannelMismatch {
            expected: model.coefficients.len(),
            got: features.channels(),
        });
    }
    let mut out = FieldRaster::new(
        features.height(),
        features.width(),
        1,
        features.cell_size(),
    );
    let mut buf = vec![T::zero(); features.channels()];
    for (row, col) in features.mask().iter_inside() {
        for (ch, slot) in buf.iter_mut().enumerate() {
            *slot = features.get(row, col, ch);
        }
        out.set(row, col, 0, predict_mlr(model, &buf)?);
    }
    Ok(out)
}

/// Regression rows from training samples: the baseline reads the center cell
/// of each patch (the same normalized channels the network sees) paired
/// with the center of the target window.
pub fn pairs_from_samples<T: Scalar>(
    samples: &[crate::sampling::Sample<T>],
    normalizer: &crate::normalize::Normalizer<T>,
) -> (Vec<Vec<T>>, Vec<T>) {
    let mut rows = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        let mid = s.window() / 2;
        // target admission guarantees the center cell is masked in
        let row = (0..s.channels())
            .map(|ch| normalizer.scale(ch, s.x.at(&[mid, mid, ch])))
            .collect();
        let t_mid = s.target_size() / 2;
        rows.push(row);
        targets.push(s.y.at(&[t_mid, t_mid]));
    }
    (rows, targets)
}

/// Inspectable coefficient dump: `channel,value` rows (standard channel names
/// when the width matches the 8-channel stack).
pub fn coefficients_csv<T: Scalar>(model: &MlrModel<T>) -> String {
    let mut out = String::from("channel,value\n");
    out.push_str(&format!("intercept,{}\n", model.intercept.as_f64()));
    for (i, c) in model.coefficients.iter().enumerate() {
        let name = if model.coefficients.len() == CHANNEL_NAMES.len() {
            CHANNEL_NAMES[i].to_string()
        } else {
            format!("channel_{i}")
        };
        out.push_str(&format!("{},{}\n", name, c.as_f64()));
    }
    out
}
