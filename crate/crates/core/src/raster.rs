//! Masked multi-channel field rasters and point-to-cell aggregation.
//!
//! A [`FieldRaster`] is an `height x width x channels` grid plus a boolean
//! in-field mask. Cells outside the mask hold a NaN sentinel in storage but
//! read as zero through [`FieldRaster::input_value`], which is the view the
//! network, the window metrics and the renderer use for background.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fixed channel order of the 8-channel feature stack.
pub const CHANNEL_NAMES: [&str; 8] = [
    "vv",
    "vh",
    "nitrogen",
    "precipitation",
    "slope",
    "elevation",
    "tpi",
    "aspect",
];

/// Boolean in-field mask over an `height x width` grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new_filled(height: usize, width: usize, value: bool) -> Self {
        Mask {
            height,
            width,
            bits: vec![value; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "mask needs {}x{} = {} bits, got {}",
                height,
                width,
                height * width,
                bits.len()
            )));
        }
        Ok(Mask {
            height,
            width,
            bits,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// In-bounds and masked-in; signed indices so window loops can probe
    /// freely past the border.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.get(row as usize, col as usize)
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    /// Number of masked-in cells, `|F|`.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Iterator over masked-in (row, col) coordinates in scan order.
    pub fn iter_inside(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / width, i % width))
    }
}

/// A georeferenced point sample carrying a yield value in bu/ac.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoPoint<T> {
    /// Meters east of the grid origin.
    pub x: T,
    /// Meters north of the grid origin.
    pub y: T,
    pub value: T,
}

/// Cell geometry used when binning points: `height x width` cells of
/// `cell_size` meters, origin at (0, 0), row = floor(y / cell_size),
/// col = floor(x / cell_size).
#[derive(Clone, Copy, Debug)]
pub struct GridGeometry {
    pub height: usize,
    pub width: usize,
    pub cell_size: f64,
}

/// Masked `height x width x channels` raster.
#[derive(Clone, Debug)]
pub struct FieldRaster<T> {
    height: usize,
    width: usize,
    channels: usize,
    cell_size: f64,
    data: Vec<T>,
    mask: Mask,
}

impl<T: Scalar> FieldRaster<T> {
    /// All cells masked out and NaN-filled.
    pub fn new(height: usize, width: usize, channels: usize, cell_size: f64) -> Self {
        FieldRaster {
            height,
            width,
            channels,
            cell_size,
            data: vec![T::nan(); height * width * channels],
            mask: Mask::new_filled(height, width, false),
        }
    }

    /// Build from raw parts, enforcing the storage invariants: masked-in
    /// cells must be finite in every channel, masked-out cells are forced to
    /// the NaN sentinel.
    pub fn from_parts(
        height: usize,
        width: usize,
        channels: usize,
        cell_size: f64,
        mut data: Vec<T>,
        mask: Mask,
    ) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "raster needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if mask.height() != height || mask.width() != width {
            return Err(Error::GeometryMismatch(format!(
                "mask is {}x{}, raster is {}x{}",
                mask.height(),
                mask.width(),
                height,
                width
            )));
        }
        for row in 0..height {
            for col in 0..width {
                let base = (row * width + col) * channels;
                if mask.get(row, col) {
                    for ch in 0..channels {
                        if !data[base + ch].is_finite() {
                            return Err(Error::Format(format!(
                                "masked-in cell ({row}, {col}) channel {ch} is not finite"
                            )));
                        }
                    }
                } else {
                    for ch in 0..channels {
                        data[base + ch] = T::nan();
                    }
                }
            }
        }
        Ok(FieldRaster {
            height,
            width,
            channels,
            cell_size,
            data,
            mask,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn same_geometry(&self, other: &FieldRaster<T>) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.cell_size == other.cell_size
    }

    /// Raw stored value; NaN outside the mask.
    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Set a masked-in value. Marks the cell masked-in.
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: T) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
        self.mask.set(row, col, true);
    }

    /// Mask a cell out and reset its storage to the NaN sentinel.
    pub fn clear_cell(&mut self, row: usize, col: usize) {
        for ch in 0..self.channels {
            self.data[(row * self.width + col) * self.channels + ch] = T::nan();
        }
        self.mask.set(row, col, false);
    }

    /// Value as seen by network input assembly and window metrics: zero for
    /// masked-out cells and anywhere outside the raster bounds.
    #[inline]
    pub fn input_value(&self, row: isize, col: isize, channel: usize) -> T {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            return T::zero();
        }
        let (row, col) = (row as usize, col as usize);
        if self.mask.get(row, col) {
            self.get(row, col, channel)
        } else {
            T::zero()
        }
    }

    /// Values of masked-in cells of one channel, in scan order.
    pub fn masked_values(&self, channel: usize) -> Vec<T> {
        self.mask
            .iter_inside()
            .map(|(r, c)| self.get(r, c, channel))
            .collect()
    }
}

/// Bin yield points into grid cells; a cell holds the arithmetic mean of the
/// points that fall in it and cells with no points stay masked out.
pub fn aggregate_points<T: Scalar>(
    points: &[GeoPoint<T>],
    grid: GridGeometry,
) -> Result<FieldRaster<T>> {
    if points.is_empty() {
        return Err(Error::EmptyPoints);
    }
    for (index, p) in points.iter().enumerate() {
        if !(p.x.is_finite() && p.y.is_finite() && p.value.is_finite()) || p.value < T::zero() {
            return Err(Error::NonFinitePoint { index });
        }
    }
    let mut sums = vec![0.0f64; grid.height * grid.width];
    let mut counts = vec![0usize; grid.height * grid.width];
    for (index, p) in points.iter().enumerate() {
        let col = (p.x.as_f64() / grid.cell_size).floor();
        let row = (p.y.as_f64() / grid.cell_size).floor();
        if row < 0.0 || col < 0.0 || row >= grid.height as f64 || col >= grid.width as f64 {
            return Err(Error::PointOutOfGrid { index });
        }
        let cell = row as usize * grid.width + col as usize;
        sums[cell] += p.value.as_f64();
        counts[cell] += 1;
    }
    let mut raster = FieldRaster::new(grid.height, grid.width, 1, grid.cell_size);
    for row in 0..grid.height {
        for col in 0..grid.width {
            let cell = row * grid.width + col;
            if counts[cell] > 0 {
                raster.set(row, col, 0, T::from_f64(sums[cell] / counts[cell] as f64));
            }
        }
    }
    Ok(raster)
}
