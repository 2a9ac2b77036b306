//! Per-channel min-max normalization fitted on training data.
//!
//! Fit statistics only ever come from masked-in cells; background zeros are
//! not part of a channel's range. Applying the fitted transform never clips:
//! values outside the training range map outside [0, 1], which is what a
//! fixed affine scaling does to unseen data.

use crate::error::{Error, Result};
use crate::raster::FieldRaster;
use crate::sampling::Sample;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer<T> {
    mins: Vec<T>,
    maxs: Vec<T>,
}

impl<T: Scalar> Normalizer<T> {
    pub fn from_bounds(mins: Vec<T>, maxs: Vec<T>) -> Result<Self> {
        if mins.len() != maxs.len() {
            return Err(Error::ChannelMismatch {
                expected: mins.len(),
                got: maxs.len(),
            });
        }
        for c in 0..mins.len() {
            if !(mins[c].is_finite() && maxs[c].is_finite()) || maxs[c] < mins[c] {
                return Err(Error::InvalidConfig(format!(
                    "channel {c} has invalid bounds ({}, {})",
                    mins[c], maxs[c]
                )));
            }
        }
        Ok(Normalizer { mins, maxs })
    }

    /// Fit per-channel min/max over all masked-in cells of the given rasters.
    pub fn fit(rasters: &[&FieldRaster<T>]) -> Result<Self> {
        let channels = match rasters.first() {
            Some(r) => r.channels(),
            None => return Err(Error::EmptyMask),
        };
        let mut mins = vec![T::infinity(); channels];
        let mut maxs = vec![T::neg_infinity(); channels];
        let mut seen = false;
        for raster in rasters {
            if raster.channels() != channels {
                return Err(Error::ChannelMismatch {
                    expected: channels,
                    got: raster.channels(),
                });
            }
            for (row, col) in raster.mask().iter_inside() {
                seen = true;
                for c in 0..channels {
                    let v = raster.get(row, col, c);
                    if v < mins[c] {
                        mins[c] = v;
                    }
                    if v > maxs[c] {
                        maxs[c] = v;
                    }
                }
            }
        }
        if !seen {
            return Err(Error::EmptyMask);
        }
        Ok(Normalizer { mins, maxs })
    }

    /// Fit over the masked-in input cells of a set of samples. Used by the
    /// trainer so the statistics come from the training split alone.
    pub fn fit_samples(samples: &[Sample<T>]) -> Result<Self> {
        let channels = match samples.first() {
            Some(s) => s.channels(),
            None => return Err(Error::EmptyMask),
        };
        let mut mins = vec![T::infinity(); channels];
        let mut maxs = vec![T::neg_infinity(); channels];
        let mut seen = false;
        for sample in samples {
            let w = sample.window();
            for row in 0..w {
                for col in 0..w {
                    if !sample.x_mask[row * w + col] {
                        continue;
                    }
                    seen = true;
                    for c in 0..channels {
                        let v = sample.x.at(&[row, col, c]);
                        if v < mins[c] {
                            mins[c] = v;
                        }
                        if v > maxs[c] {
                            maxs[c] = v;
                        }
                    }
                }
            }
        }
        if !seen {
            return Err(Error::EmptyMask);
        }
        Ok(Normalizer { mins, maxs })
    }

    pub fn channels(&self) -> usize {
        self.mins.len()
    }

    pub fn min(&self, channel: usize) -> T {
        self.mins[channel]
    }

    pub fn max(&self, channel: usize) -> T {
        self.maxs[channel]
    }

    /// A channel whose training range is a single value; it normalizes to 0.
    pub fn is_constant(&self, channel: usize) -> bool {
        self.maxs[channel] == self.mins[channel]
    }

    /// `(v - min) / (max - min)`, or 0 for constant channels. No clipping.
    #[inline]
    pub fn scale(&self, channel: usize, v: T) -> T {
        let range = self.maxs[channel] - self.mins[channel];
        if range == T::zero() {
            T::zero()
        } else {
            (v - self.mins[channel]) / range
        }
    }

    /// Inverse of [`Normalizer::scale`] for non-constant channels.
    #[inline]
    pub fn unscale(&self, channel: usize, v: T) -> T {
        let range = self.maxs[channel] - self.mins[channel];
        if range == T::zero() {
            self.mins[channel]
        } else {
            v * range + self.mins[channel]
        }
    }

    /// Normalize every masked-in cell of a raster. Masked-out cells keep the
    /// NaN storage sentinel and therefore still read as zero through
    /// [`FieldRaster::input_value`].
    pub fn apply(&self, raster: &FieldRaster<T>) -> Result<FieldRaster<T>> {
        if raster.channels() != self.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                got: raster.channels(),
            });
        }
        let mut out = FieldRaster::new(
            raster.height(),
            raster.width(),
            raster.channels(),
            raster.cell_size(),
        );
        for (row, col) in raster.mask().iter_inside() {
            for c in 0..raster.channels() {
                out.set(row, col, c, self.scale(c, raster.get(row, col, c)));
            }
        }
        Ok(out)
    }
}
