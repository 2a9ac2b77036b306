//! Pipeline commands behind the `yieldreg` binary: synthesize a field,
//! train, predict a yield map, evaluate it and render rasters as images.

pub mod config;

use anyhow::{anyhow, bail, Context, Result};
use config::RunConfig;
use std::path::{Path, PathBuf};
use yieldreg::mapgen::{self, NetworkPredictor};
use yieldreg::metrics;
use yieldreg::net::checkpoint::Checkpoint;
use yieldreg::net::ModelConfig;
use yieldreg::normalize::Normalizer;
use yieldreg::raster::FieldRaster;
use yieldreg::render::{render_to_file, Palette};
use yieldreg::sampling;
use yieldreg::synth;
use yieldreg::train::{self, TrainConfig};
use yieldreg::frst;

/// Generate a synthetic field directory from a spec file.
pub fn cmd_synth(spec_file: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let spec = config::synth_spec_from_file(spec_file, seed)?;
    let years = synth::generate::<f64>(&spec)?;
    synth::write_field_dir(&years, out_dir)?;
    println!(
        "synth: wrote {} year(s) of {}x{} rasters to {}",
        years.len(),
        spec.height,
        spec.width,
        out_dir.display()
    );
    Ok(())
}

type YearRasters = (u32, FieldRaster<f64>, FieldRaster<f64>);

fn load_years(cfg: &RunConfig) -> Result<Vec<YearRasters>> {
    let mut out = Vec::new();
    for &year in &cfg.train_years {
        let (features, yields) = synth::read_year(&cfg.field_dir, year)
            .with_context(|| format!("loading training year {year}"))?;
        out.push((year, features, yields));
    }
    Ok(out)
}

pub fn checkpoint_path(out_dir: &Path, n: usize) -> PathBuf {
    out_dir.join(format!("checkpoint_n{n}.bin"))
}

/// Assemble patches from the training years, split, fit the normalizer on
/// the training split, train, and write the best checkpoint plus the loss
/// history.
pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let years = load_years(cfg)?;
    let refs: Vec<(u32, &FieldRaster<f64>, &FieldRaster<f64>)> =
        years.iter().map(|(y, f, m)| (*y, f, m)).collect();
    let samples = sampling::assemble_years(&refs, 5, cfg.model_n, cfg.max_overlap)?;
    let split = sampling::split_train_val(samples, cfg.seed)?;
    let normalizer = Normalizer::fit_samples(&split.train)?;
    let model = ModelConfig::new(years[0].1.channels(), cfg.model_n)?;
    let train_cfg = TrainConfig {
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: cfg.seed,
        rho: cfg.rho,
        eps: cfg.epsilon,
        patience: cfg.patience,
    };
    let outcome = train::train(&split, &normalizer, model, &train_cfg)?;

    std::fs::create_dir_all(&cfg.output_dir)?;
    let ck_path = checkpoint_path(&cfg.output_dir, cfg.model_n);
    outcome.checkpoint.save(&ck_path)?;
    std::fs::write(
        cfg.output_dir.join(format!("loss_n{}.csv", cfg.model_n)),
        train::history_csv(&outcome.history),
    )?;
    let last = outcome.history.last().expect("at least one epoch");
    println!(
        "train: n={} samples={}+{} epochs={} best_epoch={} train_mse={:.4} val_mse={:.4} -> {}",
        cfg.model_n,
        split.train.len(),
        split.validation.len(),
        outcome.history.len(),
        outcome.best_epoch,
        last.train_mse,
        last.val_mse,
        ck_path.display()
    );
    Ok(ck_path)
}

/// Predict the test-year yield map with a trained checkpoint; writes the
/// reconstructed map and the contribution counts.
pub fn cmd_predict(
    cfg: &RunConfig,
    checkpoint: &Path,
    chunk_size: usize,
) -> Result<(PathBuf, PathBuf)> {
    let ck = Checkpoint::<f64>::load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let (features, _) = synth::read_year::<f64>(&cfg.field_dir, cfg.test_year)
        .with_context(|| format!("loading test year {}", cfg.test_year))?;
    if features.channels() != ck.normalizer.channels() {
        bail!(
            "feature raster has {} channels but the checkpoint normalizer expects {}",
            features.channels(),
            ck.normalizer.channels()
        );
    }
    let normalized = ck.normalizer.apply(&features)?;
    let predictor = NetworkPredictor { checkpoint: &ck };
    let (map, counts) = mapgen::predict_map(&predictor, &normalized, chunk_size)?;

    std::fs::create_dir_all(&cfg.output_dir)?;
    let n = ck.config().output;
    let map_path = cfg.output_dir.join(format!("predicted_n{n}.frst"));
    let counts_path = cfg.output_dir.join(format!("counts_n{n}.frst"));
    frst::write_raster(&map, &map_path)?;
    frst::write_raster(&counts, &counts_path)?;
    println!(
        "predict: n={} cells={} -> {}",
        n,
        map.mask().count(),
        map_path.display()
    );
    Ok((map_path, counts_path))
}

/// Evaluate one or more predicted maps against the truth; writes a
/// Table-shaped metrics CSV (one column per prediction) and the error and
/// SSIM map rasters.
pub fn cmd_evaluate(truth: &Path, preds: &[(String, PathBuf)], out_dir: &Path) -> Result<PathBuf> {
    if preds.is_empty() {
        bail!("at least one --pred is required");
    }
    let truth_raster: FieldRaster<f64> = frst::read_raster(truth)?;
    std::fs::create_dir_all(out_dir)?;

    let mut rows: Vec<Vec<String>> = vec![
        vec!["RMSE".to_string()],
        vec!["RMedSE".to_string()],
        vec!["SSIM3*".to_string()],
        vec!["SSIM11*".to_string()],
    ];
    let mut header = vec!["metric".to_string()];
    for (label, path) in preds {
        let predicted: FieldRaster<f64> = frst::read_raster(path)?;
        let report = metrics::evaluate(&truth_raster, &predicted)?;
        header.push(label.clone());
        for (row, (_, value)) in rows.iter_mut().zip(report.presentation_rows()) {
            row.push(format!("{value}"));
        }
        let prefix = if preds.len() == 1 && label == "value" {
            String::new()
        } else {
            format!("{label}_")
        };
        frst::write_raster(
            &report.square_error_map,
            &out_dir.join(format!("{prefix}se_map.frst")),
        )?;
        frst::write_raster(
            &report.ssim_map_3,
            &out_dir.join(format!("{prefix}ssim3_map.frst")),
        )?;
        frst::write_raster(
            &report.ssim_map_11,
            &out_dir.join(format!("{prefix}ssim11_map.frst")),
        )?;
    }

    let mut csv = header.join(",");
    csv.push('\n');
    for row in rows {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let csv_path = out_dir.join("metrics.csv");
    std::fs::write(&csv_path, csv)?;
    println!("evaluate: {} prediction(s) -> {}", preds.len(), csv_path.display());
    Ok(csv_path)
}

/// Render a single-channel raster to PGM/PPM.
pub fn cmd_render(input: &Path, palette: Palette, out: &Path) -> Result<()> {
    let raster: FieldRaster<f64> = frst::read_raster(input)?;
    render_to_file(&raster, palette, out)?;
    println!("render: {} -> {}", input.display(), out.display());
    Ok(())
}

/// Parse `LABEL=PATH` (or bare `PATH`, labeled by the file stem, or
/// `value` when it is the only prediction).
pub fn parse_pred_arg(arg: &str, only: bool) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((label, path)) if !label.contains(std::path::MAIN_SEPARATOR) => {
            (label.to_string(), PathBuf::from(path))
        }
        _ => {
            let path = PathBuf::from(arg);
            let label = if only {
                "value".to_string()
            } else {
                path.file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "pred".to_string())
            };
            (label, path)
        }
    }
}

/// Install the global rayon pool size; 0 keeps the default.
pub fn set_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow!("thread pool: {e}"))
}
