//! Raster rendering to binary PGM (grayscale) and PPM (palette) images.
//!
//! Values scale linearly from the in-field min/max to 8 bits; background is
//! black. A constant field renders mid-gray so it stays distinguishable
//! from the background.

use crate::error::{Error, Result};
use crate::raster::FieldRaster;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Palette {
    Gray,
    Heat,
}

impl Palette {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gray" | "grey" => Ok(Palette::Gray),
            "heat" => Ok(Palette::Heat),
            other => Err(Error::InvalidConfig(format!(
                "unknown palette `{other}` (expected gray | heat)"
            ))),
        }
    }
}

/// Blue -> cyan -> yellow -> red, three linear segments.
fn heat_rgb(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64, u: f64| ((a + (b - a) * u) * 255.0).round() as u8;
    if t < 1.0 / 3.0 {
        let u = t * 3.0;
        [0, lerp(0.0, 1.0, u), 255]
    } else if t < 2.0 / 3.0 {
        let u = (t - 1.0 / 3.0) * 3.0;
        [lerp(0.0, 1.0, u), 255, lerp(1.0, 0.0, u)]
    } else {
        let u = (t - 2.0 / 3.0) * 3.0;
        [255, lerp(1.0, 0.0, u), 0]
    }
}

/// Normalized in-field intensities in [0, 1]; None outside the mask.
fn intensities<T: Scalar>(raster: &FieldRaster<T>) -> Result<Vec<Option<f64>>> {
    if raster.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            got: raster.channels(),
        });
    }
    let values = raster.masked_values(0);
    if values.is_empty() {
        return Err(Error::EmptyMask);
    }
    let lo = values.iter().cloned().fold(T::infinity(), T::min).as_f64();
    let hi = values
        .iter()
        .cloned()
        .fold(T::neg_infinity(), T::max)
        .as_f64();
    let mut out = Vec::with_capacity(raster.height() * raster.width());
    for row in 0..raster.height() {
        for col in 0..raster.width() {
            if raster.mask().get(row, col) {
                let v = raster.get(row, col, 0).as_f64();
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                out.push(Some(t));
            } else {
                out.push(None);
            }
        }
    }
    Ok(out)
}

/// Binary PGM (P5), one gray byte per cell, background 0.
pub fn pgm_bytes<T: Scalar>(raster: &FieldRaster<T>) -> Result<Vec<u8>> {
    let ts = intensities(raster)?;
    let mut out = format!("P5\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
    out.extend(ts.iter().map(|t| match t {
        Some(t) => (t * 255.0).round() as u8,
        None => 0u8,
    }));
    Ok(out)
}

/// Binary PPM (P6) under a palette, background black.
pub fn ppm_bytes<T: Scalar>(raster: &FieldRaster<T>, palette: Palette) -> Result<Vec<u8>> {
    let ts = intensities(raster)?;
    let mut out = format!("P6\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
    for t in ts {
        match (t, palette) {
            (Some(t), Palette::Heat) => out.extend_from_slice(&heat_rgb(t)),
            (Some(t), Palette::Gray) => {
                let g = (t * 255.0).round() as u8;
                out.extend_from_slice(&[g, g, g]);
            }
            (None, _) => out.extend_from_slice(&[0, 0, 0]),
        }
    }
    Ok(out)
}

/// Render to a file; the extension picks the container (`.pgm` grayscale,
/// `.ppm` palette).
pub fn render_to_file<T: Scalar>(
    raster: &FieldRaster<T>,
    palette: Palette,
    path: &std::path::Path,
) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => pgm_bytes(raster)?,
        Some("ppm") => ppm_bytes(raster, palette)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "output extension must be .pgm or .ppm, got {other:?}"
            )))
        }
    };
    std::fs::write(path, bytes)?;
    Ok(())
}
