//! Procedural multi-year field generator: 8 feature channels plus yield,
//! standing in for real field data at desk scale.
//!
//! Terrain (elevation, and the slope/aspect/TPI derived from it by finite
//! differences) is shared bitwise across years; nitrogen strips,
//! precipitation, the SAR-like VV/VH channels and the yield vary per year.
//! Everything is drawn from one seeded stream, so a fixed seed reproduces
//! the field bit for bit.

use crate::error::{Error, Result};
use crate::frst;
use crate::raster::{FieldRaster, Mask};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryStyle {
    /// Every cell lies in the field.
    Rect,
    /// Thresholded smoothed noise, leaving background outside the blob.
    Blob,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResponseFamily {
    /// Yield is an exact affine function of the channels; recoverable by the
    /// regression baseline when sigma = 0.
    Linear,
    /// Saturating nitrogen response dominates everything else.
    NitrogenDominant,
    /// Nonlinear channel interactions a convolutional model can exploit.
    Interactive,
}

impl ResponseFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ResponseFamily::Linear),
            "nitrogen" => Ok(ResponseFamily::NitrogenDominant),
            "interactive" => Ok(ResponseFamily::Interactive),
            other => Err(Error::InvalidConfig(format!(
                "unknown response family `{other}` (expected linear | nitrogen | interactive)"
            ))),
        }
    }
}

impl BoundaryStyle {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rect" => Ok(BoundaryStyle::Rect),
            "blob" => Ok(BoundaryStyle::Blob),
            other => Err(Error::InvalidConfig(format!(
                "unknown boundary style `{other}` (expected rect | blob)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub years: usize,
    pub seed: u64,
    pub boundary: BoundaryStyle,
    /// Yield noise standard deviation in bu/ac.
    pub noise_sigma: f64,
    pub response: ResponseFamily,
}

pub struct YearData<T> {
    pub year: u32,
    pub features: FieldRaster<T>,
    pub yields: FieldRaster<T>,
}

/// Channel indices of the feature stack (see [`CHANNEL_NAMES`]).
pub const CH_VV: usize = 0;
pub const CH_VH: usize = 1;
pub const CH_NITROGEN: usize = 2;
pub const CH_PRECIP: usize = 3;
pub const CH_SLOPE: usize = 4;
pub const CH_ELEVATION: usize = 5;
pub const CH_TPI: usize = 6;
pub const CH_ASPECT: usize = 7;

const CELL_SIZE: f64 = 10.0;

/// Centered difference along columns; one-sided at the borders.
pub fn ddx(z: &[f64], height: usize, width: usize, row: usize, col: usize) -> f64 {
    debug_assert!(row < height && col < width);
    let at = |r: usize, c: usize| z[r * width + c];
    if width == 1 {
        0.0
    } else if col == 0 {
        (at(row, 1) - at(row, 0)) / CELL_SIZE
    } else if col == width - 1 {
        (at(row, col) - at(row, col - 1)) / CELL_SIZE
    } else {
        (at(row, col + 1) - at(row, col - 1)) / (2.0 * CELL_SIZE)
    }
}

/// Centered difference along rows; one-sided at the borders.
pub fn ddy(z: &[f64], height: usize, width: usize, row: usize, col: usize) -> f64 {
    let at = |r: usize, c: usize| z[r * width + c];
    if height == 1 {
        0.0
    } else if row == 0 {
        (at(1, col) - at(0, col)) / CELL_SIZE
    } else if row == height - 1 {
        (at(row, col) - at(row - 1, col)) / CELL_SIZE
    } else {
        (at(row + 1, col) - at(row - 1, col)) / (2.0 * CELL_SIZE)
    }
}

/// Elevation minus the mean of the in-bounds 8-neighborhood.
pub fn tpi(z: &[f64], height: usize, width: usize, row: usize, col: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (r, c) = (row as isize + dr, col as isize + dc);
            if r < 0 || c < 0 || r >= height as isize || c >= width as isize {
                continue;
            }
            sum += z[r as usize * width + c as usize];
            n += 1;
        }
    }
    z[row * width + col] - sum / n as f64
}

/// Smooth seeded surface: a few low-frequency sinusoid products.
fn smooth_surface(rng: &mut ChaCha8Rng, height: usize, width: usize, amplitude: f64) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random::<f64>() * amplitude,
                rng.random::<f64>() * 2.0 + 0.5,
                rng.random::<f64>() * 2.0 + 0.5,
                rng.random::<f64>() * std::f64::consts::TAU,
                rng.random::<f64>() * std::f64::consts::TAU,
            )
        })
        .collect();
    let mut out = vec![0.0; height * width];
    for row in 0..height {
        for col in 0..width {
            let u = row as f64 / height as f64;
            let v = col as f64 / width as f64;
            let mut acc = 0.0;
            for &(a, fr, fc, pr, pc) in &waves {
                acc += a
                    * (std::f64::consts::TAU * fr * u + pr).sin()
                    * (std::f64::consts::TAU * fc * v + pc).sin();
            }
            out[row * width + col] = acc;
        }
    }
    out
}

fn blob_mask(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Mask {
    let mut noise: Vec<f64> = (0..height * width).map(|_| rng.random::<f64>()).collect();
    // a few box-blur passes smooth the noise into blobs
    for _ in 0..3 {
        let mut next = vec![0.0; height * width];
        for row in 0..height {
            for col in 0..width {
                let mut sum = 0.0;
                let mut n = 0;
                for dr in -2isize..=2 {
                    for dc in -2isize..=2 {
                        let (r, c) = (row as isize + dr, col as isize + dc);
                        if r < 0 || c < 0 || r >= height as isize || c >= width as isize {
                            continue;
                        }
                        sum += noise[r as usize * width + c as usize];
                        n += 1;
                    }
                }
                next[row * width + col] = sum / n as f64;
            }
        }
        noise = next;
    }
    let mut sorted = noise.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[(sorted.len() as f64 * 0.4) as usize];
    let bits = noise.iter().map(|&v| v > threshold).collect();
    Mask::from_bits(height, width, bits).expect("mask dims")
}

struct Terrain {
    elevation: Vec<f64>,
    slope: Vec<f64>,
    aspect: Vec<f64>,
    tpi: Vec<f64>,
}

fn build_terrain(rng: &mut ChaCha8Rng, height: usize, width: usize) -> Terrain {
    let relief = smooth_surface(rng, height, width, 8.0);
    let base = 100.0 + rng.random::<f64>() * 20.0;
    let elevation: Vec<f64> = relief.iter().map(|v| base + v).collect();
    let mut slope = vec![0.0; height * width];
    let mut aspect = vec![0.0; height * width];
    let mut tpis = vec![0.0; height * width];
    for row in 0..height {
        for col in 0..width {
            let gx = ddx(&elevation, height, width, row, col);
            let gy = ddy(&elevation, height, width, row, col);
            slope[row * width + col] = (gx * gx + gy * gy).sqrt();
            aspect[row * width + col] = gy.atan2(gx);
            tpis[row * width + col] = tpi(&elevation, height, width, row, col);
        }
    }
    Terrain {
        elevation,
        slope,
        aspect,
        tpi: tpis,
    }
}

fn yield_response(
    family: ResponseFamily,
    channels: &[f64; 8],
    latent: f64,
) -> f64 {
    match family {
        ResponseFamily::Linear => {
            // exact affine response; coefficients keep the result positive
            // over the generated channel ranges so the >= 0 clamp never bites
            60.0 + 0.3 * channels[CH_VV]
                + 0.2 * channels[CH_VH]
                + 0.25 * channels[CH_NITROGEN]
                + 0.05 * channels[CH_PRECIP]
                - 15.0 * channels[CH_SLOPE]
                + 0.02 * channels[CH_ELEVATION]
                + 3.0 * channels[CH_TPI]
                + 0.5 * channels[CH_ASPECT]
        }
        ResponseFamily::NitrogenDominant => {
            20.0 + 90.0 * (1.0 - (-channels[CH_NITROGEN] / 60.0).exp()) + 4.0 * latent
        }
        ResponseFamily::Interactive => {
            12.0 + 0.35 * channels[CH_NITROGEN] * latent
                + 22.0 * latent
                + 0.06 * channels[CH_PRECIP] * (1.0 - 2.0 * channels[CH_SLOPE]).max(0.0)
                + 3.0 * (channels[CH_ELEVATION] / 8.0).sin()
        }
    }
}

/// Generate the per-year feature stacks and yield maps.
pub fn generate<T: Scalar>(spec: &SynthSpec) -> Result<Vec<YearData<T>>> {
    if spec.height < 5 || spec.width < 5 {
        return Err(Error::RasterTooSmall {
            height: spec.height,
            width: spec.width,
            window: 5,
        });
    }
    if spec.years == 0 {
        return Err(Error::InvalidConfig("need at least one year".into()));
    }
    if spec.noise_sigma < 0.0 {
        return Err(Error::InvalidConfig("noise sigma must be >= 0".into()));
    }
    let (height, width) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mask = match spec.boundary {
        BoundaryStyle::Rect => Mask::new_filled(height, width, true),
        BoundaryStyle::Blob => blob_mask(&mut rng, height, width),
    };
    let terrain = build_terrain(&mut rng, height, width);

    // shared latent fertility in [0, 1]; the SAR channels observe it
    let latent_raw = smooth_surface(&mut rng, height, width, 1.0);
    let (lo, hi) = latent_raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let latent: Vec<f64> = latent_raw
        .iter()
        .map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
        .collect();

    let strip_width = (width / 8).max(2);
    let rates = [40.0, 60.0, 80.0, 100.0, 120.0];
    let noise = Normal::new(0.0, spec.noise_sigma.max(1e-300)).expect("valid sigma");

    let mut years = Vec::with_capacity(spec.years);
    for year_index in 0..spec.years {
        let year = year_index as u32 + 1;
        // per-year weather and management
        let precip = 250.0 + rng.random::<f64>() * 150.0;
        let strip_offset = rng.random_range(0..rates.len());
        let vv_noise = smooth_surface(&mut rng, height, width, 0.8);
        let vh_noise = smooth_surface(&mut rng, height, width, 0.8);
        let moisture = rng.random::<f64>(); // shifts backscatter per year

        let mut features = FieldRaster::new(height, width, 8, CELL_SIZE);
        let mut yields = FieldRaster::new(height, width, 1, CELL_SIZE);
        for row in 0..height {
            for col in 0..width {
                if !mask.get(row, col) {
                    continue;
                }
                let cell = row * width + col;
                let strip = col / strip_width;
                let nitrogen = rates[(strip + strip_offset) % rates.len()];
                let vv = -14.0 + 6.0 * latent[cell] + 1.5 * moisture + vv_noise[cell];
                let vh = -20.0 + 5.0 * latent[cell] + 1.2 * moisture + vh_noise[cell];
                let channels = [
                    vv,
                    vh,
                    nitrogen,
                    precip,
                    terrain.slope[cell],
                    terrain.elevation[cell],
                    terrain.tpi[cell],
                    terrain.aspect[cell],
                ];
                for (ch, &v) in channels.iter().enumerate() {
                    features.set(row, col, ch, T::from_f64(v));
                }
                let mut y = yield_response(spec.response, &channels, latent[cell]);
                if spec.noise_sigma > 0.0 {
                    y += noise.sample(&mut rng);
                }
                yields.set(row, col, 0, T::from_f64(y.max(0.0)));
            }
        }
        years.push(YearData {
            year,
            features,
            yields,
        });
    }
    Ok(years)
}

/// Write a generated field as FRST rasters plus a `manifest.csv` of
/// `year,features,yield` file names.
pub fn write_field_dir<T: Scalar>(years: &[YearData<T>], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::from("year,features,yield\n");
    for data in years {
        let f_name = format!("features_y{}.frst", data.year);
        let y_name = format!("yield_y{}.frst", data.year);
        frst::write_raster(&data.features, &dir.join(&f_name))?;
        frst::write_raster(&data.yields, &dir.join(&y_name))?;
        manifest.push_str(&format!("{},{},{}\n", data.year, f_name, y_name));
    }
    std::fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

/// Load the rasters for one year as named by the directory manifest.
pub fn read_year<T: Scalar>(dir: &Path, year: u32) -> Result<(FieldRaster<T>, FieldRaster<T>)> {
    let manifest = std::fs::read_to_string(dir.join("manifest.csv"))?;
    for line in manifest.lines().skip(1) {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 3 {
            continue;
        }
        if fields[0].parse::<u32>() == Ok(year) {
            let features = frst::read_raster(&dir.join(fields[1]))?;
            let yields = frst::read_raster(&dir.join(fields[2]))?;
            return Ok((features, yields));
        }
    }
    Err(Error::InvalidConfig(format!(
        "year {year} not present in {}",
        dir.join("manifest.csv").display()
    )))
}

/// Years listed by the directory manifest.
pub fn manifest_years(dir: &Path) -> Result<Vec<u32>> {
    let manifest = std::fs::read_to_string(dir.join("manifest.csv"))?;
    let mut years = Vec::new();
    for line in manifest.lines().skip(1) {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() == 3 {
            if let Ok(y) = fields[0].parse() {
                years.push(y);
            }
        }
    }
    Ok(years)
}
