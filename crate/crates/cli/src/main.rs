use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use yieldreg::render::Palette;
use yieldreg_cli::config::RunConfig;
use yieldreg_cli::{
    checkpoint_path, cmd_evaluate, cmd_predict, cmd_render, cmd_synth, cmd_train, parse_pred_arg,
    set_threads,
};

#[derive(Parser)]
#[command(
    name = "yieldreg",
    about = "Field yield regression pipeline: synth, train, predict, evaluate, render",
    version
)]
struct Cli {
    /// Worker threads for parallel stages (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-year field directory.
    Synth {
        /// Spec file (`key = value`: height, width, years, seed, boundary,
        /// noise_sigma, response).
        #[arg(long)]
        config: PathBuf,
        /// Output field directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the spec seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on the configured training years and write the best checkpoint.
    Train {
        /// Run config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the model output window (1, 3 or 5).
        #[arg(long, value_parser = clap::value_parser!(usize))]
        model_n: Option<usize>,
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the test-year yield map from a checkpoint.
    Predict {
        /// Run config file (field directory and test year).
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint path; defaults to the one `train` wrote for the
        /// configured model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Windows per inference batch.
        #[arg(long, default_value_t = yieldreg::mapgen::DEFAULT_CHUNK)]
        chunk_size: usize,
    },
    /// Compare predicted maps against the ground truth.
    Evaluate {
        /// Ground-truth yield raster (FRST).
        #[arg(long)]
        truth: PathBuf,
        /// Predicted raster(s), `LABEL=PATH` or bare path; repeatable.
        #[arg(long, required = true)]
        pred: Vec<String>,
        /// Output directory for metrics.csv and the map rasters.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a single-channel raster to a PGM/PPM image.
    Render {
        /// Input raster (FRST).
        #[arg(long)]
        input: PathBuf,
        /// `gray` or `heat` (PPM output only).
        #[arg(long, default_value = "gray")]
        palette: String,
        /// Output image path (.pgm or .ppm).
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    set_threads(cli.threads)?;
    match cli.command {
        Command::Synth { config, out, seed } => cmd_synth(&config, &out, seed),
        Command::Train {
            config,
            model_n,
            seed,
            out,
        } => {
            let mut cfg = RunConfig::from_file(&config)?;
            if let Some(n) = model_n {
                cfg.model_n = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            cfg.validate()?;
            cmd_train(&cfg).map(|_| ())
        }
        Command::Predict {
            config,
            checkpoint,
            out,
            chunk_size,
        } => {
            let mut cfg = RunConfig::from_file(&config)?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            let ck = checkpoint.unwrap_or_else(|| checkpoint_path(&cfg.output_dir, cfg.model_n));
            cmd_predict(&cfg, &ck, chunk_size).map(|_| ())
        }
        Command::Evaluate { truth, pred, out } => {
            let only = pred.len() == 1;
            let preds: Vec<(String, PathBuf)> =
                pred.iter().map(|p| parse_pred_arg(p, only)).collect();
            cmd_evaluate(&truth, &preds, &out).map(|_| ())
        }
        Command::Render {
            input,
            palette,
            out,
        } => cmd_render(&input, Palette::parse(&palette)?, &out),
    }
}

fn main() {
    if let Err(err) = run() {
        eprintln!("yieldreg: {err:#}");
        std::process::exit(1);
    }
}
