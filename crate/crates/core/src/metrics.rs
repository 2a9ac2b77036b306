//! Masked-field evaluation: RMSE, RMedSE and windowed SSIM.
//!
//! SSIM windows are evaluated at every raster cell over `w x w` neighborhoods
//! read through the zero-background view, so windows near the field boundary
//! include background zeros in both maps; identical backgrounds push those
//! indices toward 1. The scalar SSIM aggregates average the map over the
//! in-field cells only.

use crate::error::{Error, Result};
use crate::mapgen::square_error_map;
use crate::raster::{FieldRaster, Mask};
use crate::scalar::Scalar;
use rayon::prelude::*;

/// SSIM stabilizer factors: `C1 = (K1 L)^2`, `C2 = (K2 L)^2`.
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Debug)]
pub struct MetricsReport<T> {
    pub rmse: f64,
    pub rmedse: f64,
    pub ssim3: f64,
    pub ssim11: f64,
    pub ssim_map_3: FieldRaster<T>,
    pub ssim_map_11: FieldRaster<T>,
    pub square_error_map: FieldRaster<T>,
    /// `|F|`, the number of in-field cells the aggregates ran over.
    pub field_cells: usize,
    /// Dynamic range used for the SSIM stabilizers.
    pub dynamic_range: f64,
}

fn check_pair<T: Scalar>(truth: &FieldRaster<T>, predicted: &FieldRaster<T>) -> Result<()> {
    if !truth.same_geometry(predicted) {
        return Err(Error::GeometryMismatch(format!(
            "{}x{} vs {}x{}",
            truth.height(),
            truth.width(),
            predicted.height(),
            predicted.width()
        )));
    }
    Ok(())
}

/// Root mean square error over the in-field cells.
pub fn rmse<T: Scalar>(
    truth: &FieldRaster<T>,
    predicted: &FieldRaster<T>,
    field: &Mask,
) -> Result<f64> {
    check_pair(truth, predicted)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (row, col) in field.iter_inside() {
        let d = truth.get(row, col, 0).as_f64() - predicted.get(row, col, 0).as_f64();
        sum += d * d;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((sum / count as f64).sqrt())
}

/// Root median square error; an even cell count takes the mean of the two
/// central order statistics.
pub fn rmedse<T: Scalar>(
    truth: &FieldRaster<T>,
    predicted: &FieldRaster<T>,
    field: &Mask,
) -> Result<f64> {
    check_pair(truth, predicted)?;
    let mut squares: Vec<f64> = field
        .iter_inside()
        .map(|(row, col)| {
            let d = truth.get(row, col, 0).as_f64() - predicted.get(row, col, 0).as_f64();
            d * d
        })
        .collect();
    if squares.is_empty() {
        return Err(Error::EmptyMask);
    }
    squares.sort_by(|a, b| a.partial_cmp(b).expect("finite squares"));
    let k = squares.len();
    let median = if k % 2 == 1 {
        squares[k / 2]
    } else {
        0.5 * (squares[k / 2 - 1] + squares[k / 2])
    };
    Ok(median.sqrt())
}

/// Dynamic range over both maps, background zeros included. Degenerate
/// all-zero pairs fall back to 1 so identical windows still score 1.
pub fn dynamic_range<T: Scalar>(a: &FieldRaster<T>, b: &FieldRaster<T>) -> f64 {
    let mut top = 0.0f64;
    for r in [a, b] {
        for (row, col) in r.mask().iter_inside() {
            top = top.max(r.get(row, col, 0).as_f64());
        }
    }
    if top > 0.0 {
        top
    } else {
        1.0
    }
}

/// SSIM between two equally sized value windows with uniform weights and
/// population variance.
fn ssim_value(a: &[f64], b: &[f64], c1: f64, c2: f64) -> f64 {
    let n = a.len() as f64;
    let mu_a = a.iter().sum::<f64>() / n;
    let mu_b = b.iter().sum::<f64>() / n;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut cov = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - mu_a, y - mu_b);
        var_a += dx * dx;
        var_b += dy * dy;
        cov += dx * dy;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// SSIM map over every raster cell using `window x window` neighborhoods
/// (odd `window`), zero-filled beyond bounds and over background.
pub fn ssim_map<T: Scalar>(
    truth: &FieldRaster<T>,
    predicted: &FieldRaster<T>,
    window: usize,
) -> Result<FieldRaster<T>> {
    check_pair(truth, predicted)?;
    if window.is_multiple_of(2) || window == 0 {
        return Err(Error::InvalidConfig(format!(
            "SSIM window must be odd, got {window}"
        )));
    }
    let range = dynamic_range(truth, predicted);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let (height, width) = (truth.height(), truth.width());
    let half = (window / 2) as isize;

    let rows: Vec<Vec<f64>> = (0..height)
        .into_par_iter()
        .map(|row| {
            let mut wa = vec![0.0f64; window * window];
            let mut wb = vec![0.0f64; window * window];
            (0..width)
                .map(|col| {
                    let mut i = 0;
                    for dr in -half..=half {
                        for dc in -half..=half {
                            let (r, c) = (row as isize + dr, col as isize + dc);
                            wa[i] = truth.input_value(r, c, 0).as_f64();
                            wb[i] = predicted.input_value(r, c, 0).as_f64();
                            i += 1;
                        }
                    }
                    ssim_value(&wa, &wb, c1, c2)
                })
                .collect()
        })
        .collect();

    // the SSIM map is defined on the full grid, so every cell is masked in
    let mut out = FieldRaster::new(height, width, 1, truth.cell_size());
    for (row, values) in rows.iter().enumerate() {
        for (col, &v) in values.iter().enumerate() {
            out.set(row, col, 0, T::from_f64(v));
        }
    }
    Ok(out)
}

/// Mean of an SSIM map over the in-field cells only.
pub fn ssim_aggregate<T: Scalar>(map: &FieldRaster<T>, field: &Mask) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (row, col) in field.iter_inside() {
        sum += map.get(row, col, 0).as_f64();
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

/// Full evaluation of a predicted map against the truth over the truth's
/// field mask.
pub fn evaluate<T: Scalar>(
    truth: &FieldRaster<T>,
    predicted: &FieldRaster<T>,
) -> Result<MetricsReport<T>> {
    let field = truth.mask().clone();
    let map3 = ssim_map(truth, predicted, 3)?;
    let map11 = ssim_map(truth, predicted, 11)?;
    Ok(MetricsReport {
        rmse: rmse(truth, predicted, &field)?,
        rmedse: rmedse(truth, predicted, &field)?,
        ssim3: ssim_aggregate(&map3, &field)?,
        ssim11: ssim_aggregate(&map11, &field)?,
        ssim_map_3: map3,
        ssim_map_11: map11,
        square_error_map: square_error_map(truth, predicted)?,
        field_cells: field.count(),
        dynamic_range: dynamic_range(truth, predicted),
    })
}

impl<T: Scalar> MetricsReport<T> {
    /// The four presentation rows; SSIM values are scaled by 100 for display
    /// while the stored values stay in [-1, 1].
    pub fn presentation_rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("RMSE", self.rmse),
            ("RMedSE", self.rmedse),
            ("SSIM3*", self.ssim3 * 100.0),
            ("SSIM11*", self.ssim11 * 100.0),
        ]
    }
}
