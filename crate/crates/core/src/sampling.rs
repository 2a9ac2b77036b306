//! Patch extraction, multi-year assembly and the train/validation split.
//!
//! Training patches are taken on a regular grid whose stride is the densest
//! one still satisfying the maximum-overlap rule. A patch is only emitted
//! when its full target footprint is masked-in; its input window may include
//! background cells, which enter the network as zeros.

use crate::error::{Error, Result};
use crate::raster::FieldRaster;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One training pair: a `W x W x n` input window and its centered `N x N`
/// yield target.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    /// Input window `[W, W, channels]`, background cells zero-filled.
    pub x: Tensor<T>,
    /// Which input cells are masked-in; background stays zero after
    /// normalization too.
    pub x_mask: Vec<bool>,
    /// Target window `[N, N]` in bu/ac.
    pub y: Tensor<T>,
    /// (row, col) of the window's top-left cell.
    pub origin: (usize, usize),
    pub year: u32,
}

impl<T: Scalar> Sample<T> {
    pub fn window(&self) -> usize {
        self.x.dims()[0]
    }

    pub fn target_size(&self) -> usize {
        self.y.dims()[0]
    }

    pub fn channels(&self) -> usize {
        self.x.dims()[2]
    }
}

/// Seeded 90/10 partition of the sample set.
#[derive(Clone, Debug)]
pub struct DatasetSplit<T> {
    pub train: Vec<Sample<T>>,
    pub validation: Vec<Sample<T>>,
    pub seed: u64,
}

/// Densest stride that keeps the linear overlap of adjacent windows at or
/// below `max_overlap`.
pub fn stride_for(window: usize, max_overlap: f64) -> usize {
    let s = (window as f64 * (1.0 - max_overlap)).ceil() as usize;
    s.max(1)
}

/// Extract all admissible `(x, y)` window pairs from one year of data.
pub fn extract_patches<T: Scalar>(
    features: &FieldRaster<T>,
    yield_map: &FieldRaster<T>,
    window: usize,
    target: usize,
    max_overlap: f64,
    year: u32,
) -> Result<Vec<Sample<T>>> {
    if !features.same_geometry(yield_map) {
        return Err(Error::GeometryMismatch(format!(
            "features {}x{} vs yield {}x{}",
            features.height(),
            features.width(),
            yield_map.height(),
            yield_map.width()
        )));
    }
    if yield_map.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            got: yield_map.channels(),
        });
    }
    if features.height() < window || features.width() < window {
        return Err(Error::RasterTooSmall {
            height: features.height(),
            width: features.width(),
            window,
        });
    }
    if !(target <= window && target % 2 == 1) {
        return Err(Error::InvalidConfig(format!(
            "target size {target} must be odd and no larger than the window {window}"
        )));
    }
    if !(0.0..1.0).contains(&max_overlap) {
        return Err(Error::InvalidConfig(format!(
            "max_overlap {max_overlap} must lie in [0, 1)"
        )));
    }

    let stride = stride_for(window, max_overlap);
    let offset = (window - target) / 2;
    let mut samples = Vec::new();

    let mut row = 0;
    while row + window <= features.height() {
        let mut col = 0;
        while col + window <= features.width() {
            if let Some(sample) =
                window_pair(features, yield_map, row, col, window, target, offset, year)
            {
                samples.push(sample);
            }
            col += stride;
        }
        row += stride;
    }
    Ok(samples)
}

#[allow(clippy::too_many_arguments)]
fn window_pair<T: Scalar>(
    features: &FieldRaster<T>,
    yield_map: &FieldRaster<T>,
    row: usize,
    col: usize,
    window: usize,
    target: usize,
    offset: usize,
    year: u32,
) -> Option<Sample<T>> {
    // every target cell must be masked-in with a finite, non-negative yield
    for i in 0..target {
        for j in 0..target {
            let (r, c) = (row + offset + i, col + offset + j);
            if !yield_map.mask().get(r, c) {
                return None;
            }
            let v = yield_map.get(r, c, 0);
            if !v.is_finite() || v < T::zero() {
                return None;
            }
        }
    }
    let channels = features.channels();
    let mut x = Tensor::zeros(&[window, window, channels]);
    let mut x_mask = vec![false; window * window];
    for i in 0..window {
        for j in 0..window {
            let (r, c) = (row + i, col + j);
            if features.mask().get(r, c) {
                x_mask[i * window + j] = true;
                for ch in 0..channels {
                    x.set(&[i, j, ch], features.get(r, c, ch));
                }
            }
        }
    }
    let mut y = Tensor::zeros(&[target, target]);
    for i in 0..target {
        for j in 0..target {
            y.set(&[i, j], yield_map.get(row + offset + i, col + offset + j, 0));
        }
    }
    Some(Sample {
        x,
        x_mask,
        y,
        origin: (row, col),
        year,
    })
}

/// Union of per-year patch lists; grids must agree across years.
pub fn assemble_years<T: Scalar>(
    per_year: &[(u32, &FieldRaster<T>, &FieldRaster<T>)],
    window: usize,
    target: usize,
    max_overlap: f64,
) -> Result<Vec<Sample<T>>> {
    let mut samples = Vec::new();
    let mut geometry: Option<(usize, usize, usize)> = None;
    for &(year, features, yields) in per_year {
        let this = (features.height(), features.width(), features.channels());
        match geometry {
            None => geometry = Some(this),
            Some(g) if g != this => {
                return Err(Error::GeometryMismatch(format!(
                    "year {year} has grid {this:?}, expected {g:?}"
                )))
            }
            _ => {}
        }
        samples.extend(extract_patches(
            features,
            yields,
            window,
            target,
            max_overlap,
            year,
        )?);
    }
    Ok(samples)
}

/// Seeded uniform shuffle; the first ceil(0.9 k) samples train, the rest
/// validate.
pub fn split_train_val<T: Scalar>(samples: Vec<Sample<T>>, seed: u64) -> Result<DatasetSplit<T>> {
    let k = samples.len();
    if k < 10 {
        return Err(Error::TooFewSamples { got: k, need: 10 });
    }
    let mut order: Vec<usize> = (0..k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_train = (0.9 * k as f64).ceil() as usize;
    let mut by_slot: Vec<Option<Sample<T>>> = samples.into_iter().map(Some).collect();
    let train = order[..n_train]
        .iter()
        .map(|&i| by_slot[i].take().expect("unique index"))
        .collect();
    let validation = order[n_train..]
        .iter()
        .map(|&i| by_slot[i].take().expect("unique index"))
        .collect();
    Ok(DatasetSplit {
        train,
        validation,
        seed,
    })
}

/// Debug dump: FRST-encoded x/y blocks in one file per kind plus a manifest
/// of `index,year,row,col` lines.
pub fn dump_samples<T: Scalar>(samples: &[Sample<T>], dir: &std::path::Path) -> Result<()> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut x_blob = Vec::new();
    let mut y_blob = Vec::new();
    let mut manifest = String::from("index,year,row,col\n");
    for (i, s) in samples.iter().enumerate() {
        let w = s.window();
        let n = s.target_size();
        let mut xr = FieldRaster::new(w, w, s.channels(), 0.0);
        for r in 0..w {
            for c in 0..w {
                if s.x_mask[r * w + c] {
                    for ch in 0..s.channels() {
                        xr.set(r, c, ch, s.x.at(&[r, c, ch]));
                    }
                }
            }
        }
        let mut yr = FieldRaster::new(n, n, 1, 0.0);
        for r in 0..n {
            for c in 0..n {
                yr.set(r, c, 0, s.y.at(&[r, c]));
            }
        }
        x_blob.extend_from_slice(&crate::frst::to_bytes(&xr));
        y_blob.extend_from_slice(&crate::frst::to_bytes(&yr));
        manifest.push_str(&format!("{},{},{},{}\n", i, s.year, s.origin.0, s.origin.1));
    }
    std::fs::write(dir.join("samples_x.frstseq"), x_blob)?;
    std::fs::write(dir.join("samples_y.frstseq"), y_blob)?;
    let mut f = std::fs::File::create(dir.join("manifest.csv"))?;
    f.write_all(manifest.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_raster(h: usize, w: usize, channels: usize, base: f64) -> FieldRaster<f64> {
        let mut r = FieldRaster::new(h, w, channels, 10.0);
        for row in 0..h {
            for col in 0..w {
                for ch in 0..channels {
                    r.set(row, col, ch, base + (row * w + col) as f64 + ch as f64 * 0.01);
                }
            }
        }
        r
    }

    #[test]
    fn stride_is_densest_admissible() {
        // Enumerate: (W - s) / W <= 0.75 requires s >= 1.25, so s = 2;
        // s = 1 would give overlap 0.8 > 0.75.
        for s in 1..=5usize {
            let overlap = (5 - s) as f64 / 5.0;
            if s < 2 {
                assert!(overlap > 0.75);
            }
            if s >= 2 {
                assert!(overlap <= 0.75);
            }
        }
        assert_eq!(stride_for(5, 0.75), 2);
        assert_eq!(stride_for(5, 0.0), 5);
        assert_eq!(stride_for(5, 0.5), 3);
    }

    #[test]
    fn masked_out_yield_gives_no_samples() {
        let features = full_raster(9, 9, 2, 0.0);
        let yields = FieldRaster::<f64>::new(9, 9, 1, 10.0);
        let samples = extract_patches(&features, &yields, 5, 5, 0.75, 1).unwrap();
        assert!(samples.is_empty());
    }

    #[test]
    fn nine_by_nine_gives_nine_patches() {
        let features = full_raster(9, 9, 2, 0.0);
        let yields = full_raster(9, 9, 1, 100.0);
        let samples = extract_patches(&features, &yields, 5, 5, 0.75, 1).unwrap();
        assert_eq!(samples.len(), 9);
        let origins: Vec<(usize, usize)> = samples.iter().map(|s| s.origin).collect();
        for r in [0usize, 2, 4] {
            for c in [0usize, 2, 4] {
                assert!(origins.contains(&(r, c)));
            }
        }
    }

    #[test]
    fn target_correspondence_holds_for_all_head_sizes() {
        let features = full_raster(11, 11, 3, 0.0);
        let yields = full_raster(11, 11, 1, 500.0);
        for target in [1usize, 3, 5] {
            let samples = extract_patches(&features, &yields, 5, target, 0.75, 1).unwrap();
            assert!(!samples.is_empty());
            let offset = (5 - target) / 2;
            for s in &samples {
                for i in 0..target {
                    for j in 0..target {
                        let want = yields.get(s.origin.0 + i + offset, s.origin.1 + j + offset, 0);
                        assert_eq!(s.y.at(&[i, j]), want);
                    }
                }
            }
        }
    }

    #[test]
    fn origins_lie_on_stride_grid() {
        let features = full_raster(13, 13, 1, 0.0);
        let yields = full_raster(13, 13, 1, 10.0);
        let samples = extract_patches(&features, &yields, 5, 3, 0.75, 1).unwrap();
        for s in &samples {
            assert_eq!(s.origin.0 % 2, 0);
            assert_eq!(s.origin.1 % 2, 0);
        }
    }

    #[test]
    fn partially_masked_target_is_skipped_but_input_background_allowed() {
        let features = full_raster(9, 9, 1, 0.0);
        let mut yields = full_raster(9, 9, 1, 10.0);
        // hole in the target footprint of the (0,0) patch
        yields.clear_cell(2, 2);
        let samples = extract_patches(&features, &yields, 5, 3, 0.75, 1).unwrap();
        assert!(samples.iter().all(|s| s.origin != (0, 0)));

        // background in the input window alone does not veto a patch
        let mut features2 = full_raster(9, 9, 1, 0.0);
        features2.clear_cell(0, 0);
        let yields2 = full_raster(9, 9, 1, 10.0);
        let samples2 = extract_patches(&features2, &yields2, 5, 3, 0.75, 1).unwrap();
        let s00 = samples2.iter().find(|s| s.origin == (0, 0)).unwrap();
        assert_eq!(s00.x.at(&[0, 0, 0]), 0.0);
        assert!(!s00.x_mask[0]);
    }

    #[test]
    fn small_raster_is_rejected() {
        let features = full_raster(4, 9, 1, 0.0);
        let yields = full_raster(4, 9, 1, 1.0);
        assert!(matches!(
            extract_patches(&features, &yields, 5, 5, 0.75, 1),
            Err(Error::RasterTooSmall { .. })
        ));
    }

    #[test]
    fn assemble_single_year_is_identity() {
        let features = full_raster(9, 9, 2, 0.0);
        let yields = full_raster(9, 9, 1, 50.0);
        let direct = extract_patches(&features, &yields, 5, 5, 0.75, 7).unwrap();
        let assembled = assemble_years(&[(7, &features, &yields)], 5, 5, 0.75).unwrap();
        assert_eq!(direct, assembled);
    }

    #[test]
    fn assemble_two_years_is_disjoint_union() {
        let f1 = full_raster(9, 9, 2, 0.0);
        let y1 = full_raster(9, 9, 1, 50.0);
        let f2 = full_raster(9, 9, 2, 5.0);
        let y2 = full_raster(9, 9, 1, 70.0);
        let all = assemble_years(&[(1, &f1, &y1), (2, &f2, &y2)], 5, 5, 0.75).unwrap();
        let k1 = extract_patches(&f1, &y1, 5, 5, 0.75, 1).unwrap().len();
        let k2 = extract_patches(&f2, &y2, 5, 5, 0.75, 2).unwrap().len();
        assert_eq!(all.len(), k1 + k2);
    }

    #[test]
    fn identical_years_duplicate_each_patch_with_distinct_tags() {
        let f = full_raster(9, 9, 2, 0.0);
        let y = full_raster(9, 9, 1, 50.0);
        let all = assemble_years(&[(1, &f, &y), (2, &f, &y)], 5, 5, 0.75).unwrap();
        // multiset: every (origin) appears exactly twice, once per year
        for s in &all {
            let twins: Vec<u32> = all
                .iter()
                .filter(|t| t.origin == s.origin)
                .map(|t| t.year)
                .collect();
            assert_eq!(twins.len(), 2);
            assert!(twins.contains(&1) && twins.contains(&2));
        }
    }

    #[test]
    fn geometry_mismatch_across_years_is_rejected() {
        let f1 = full_raster(9, 9, 2, 0.0);
        let y1 = full_raster(9, 9, 1, 50.0);
        let f2 = full_raster(11, 9, 2, 0.0);
        let y2 = full_raster(11, 9, 1, 50.0);
        assert!(matches!(
            assemble_years(&[(1, &f1, &y1), (2, &f2, &y2)], 5, 5, 0.75),
            Err(Error::GeometryMismatch(_))
        ));
    }

    fn dummy_samples(k: usize) -> Vec<Sample<f64>> {
        let features = full_raster(25, 25, 1, 0.0);
        let yields = full_raster(25, 25, 1, 10.0);
        let mut s = extract_patches(&features, &yields, 5, 5, 0.75, 1).unwrap();
        s.truncate(k);
        assert_eq!(s.len(), k);
        s
    }

    #[test]
    fn split_ratios() {
        let split = split_train_val(dummy_samples(100), 3).unwrap();
        assert_eq!(split.train.len(), 90);
        assert_eq!(split.validation.len(), 10);

        let split = split_train_val(dummy_samples(10), 3).unwrap();
        assert_eq!(split.train.len(), 9);
        assert_eq!(split.validation.len(), 1);

        assert!(matches!(
            split_train_val(dummy_samples(9), 3),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn sample_dump_writes_blocks_and_manifest() {
        let features = full_raster(9, 9, 2, 0.0);
        let yields = full_raster(9, 9, 1, 50.0);
        let samples = extract_patches(&features, &yields, 5, 3, 0.75, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        dump_samples(&samples, dir.path()).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.lines().count(), samples.len() + 1);
        assert!(manifest.lines().nth(1).unwrap().starts_with("0,4,"));
        // each x block is a full 5x5x2 FRST raster, back to back
        let x_blob = std::fs::read(dir.path().join("samples_x.frstseq")).unwrap();
        let block = 25 + 5 * 5 * 2 * 4 + 5 * 5;
        assert_eq!(x_blob.len(), samples.len() * block);
        let first: FieldRaster<f64> = crate::frst::from_bytes(&x_blob[..block]).unwrap();
        assert_eq!(first.get(0, 0, 0), samples[0].x.at(&[0, 0, 0]));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let a = split_train_val(dummy_samples(40), 11).unwrap();
        let b = split_train_val(dummy_samples(40), 11).unwrap();
        let keys = |v: &Vec<Sample<f64>>| v.iter().map(|s| s.origin).collect::<Vec<_>>();
        assert_eq!(keys(&a.train), keys(&b.train));
        assert_eq!(keys(&a.validation), keys(&b.validation));

        let c = split_train_val(dummy_samples(40), 12).unwrap();
        assert_ne!(keys(&a.train), keys(&c.train));

        for s in &a.validation {
            assert!(!a.train.iter().any(|t| t.origin == s.origin));
        }
    }
}
