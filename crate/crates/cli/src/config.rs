//! Flat `key = value` configuration files with optional `[section]` headers.
//! Keys inside a section are addressed as `section.key`.

use anyhow::{anyhow, bail, Context, Result};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use yieldreg::synth::{BoundaryStyle, ResponseFamily, SynthSpec};

#[derive(Debug, Default)]
pub struct ConfigMap {
    entries: HashMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`, got `{raw}`", ln + 1);
            };
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            entries.insert(full, value.trim().to_string());
        }
        Ok(ConfigMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.str(key)
            .ok_or_else(|| anyhow!("config key `{key}` is required"))
    }

    pub fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| anyhow!("config key `{key}`: cannot parse `{s}`")),
        }
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse_opt(key)?.unwrap_or(default))
    }
}

/// One training/prediction run over a field directory.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub field_dir: PathBuf,
    pub train_years: Vec<u32>,
    pub test_year: u32,
    pub max_overlap: f64,
    pub model_n: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub rho: f64,
    pub epsilon: f64,
    pub patience: Option<usize>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let map = ConfigMap::load(path)?;
        let train_years: Vec<u32> = map
            .require("data.train_years")?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| anyhow!("bad train year `{s}`"))
            })
            .collect::<Result<_>>()?;
        let cfg = RunConfig {
            field_dir: PathBuf::from(map.require("data.field_dir")?),
            train_years,
            test_year: map
                .require("data.test_year")?
                .parse()
                .map_err(|_| anyhow!("bad test year"))?,
            max_overlap: map.parse_or("data.max_overlap", 0.75)?,
            model_n: map.parse_or("model.n", 5)?,
            batch_size: map.parse_or("train.batch_size", 96)?,
            epochs: map.parse_or("train.epochs", 500)?,
            seed: map.parse_or("train.seed", 0)?,
            rho: map.parse_or("train.rho", 0.95)?,
            epsilon: map.parse_or("train.epsilon", 1e-6)?,
            patience: map.parse_opt("train.patience")?,
            output_dir: PathBuf::from(map.str("output.dir").unwrap_or("out")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_years.is_empty() {
            bail!("at least one training year is required");
        }
        if self.train_years.contains(&self.test_year) {
            bail!(
                "test year {} must not appear in the training years",
                self.test_year
            );
        }
        if ![1, 3, 5].contains(&self.model_n) {
            bail!("model n must be 1, 3 or 5, got {}", self.model_n);
        }
        Ok(())
    }
}

pub fn synth_spec_from_file(path: &Path, seed_override: Option<u64>) -> Result<SynthSpec> {
    let map = ConfigMap::load(path)?;
    let spec = SynthSpec {
        height: map.require("height")?.parse().map_err(|_| anyhow!("bad height"))?,
        width: map.require("width")?.parse().map_err(|_| anyhow!("bad width"))?,
        years: map.parse_or("years", 2)?,
        seed: seed_override.unwrap_or(map.parse_or("seed", 0)?),
        boundary: BoundaryStyle::parse(map.str("boundary").unwrap_or("rect"))?,
        noise_sigma: map.parse_or("noise_sigma", 2.0)?,
        response: ResponseFamily::parse(map.str("response").unwrap_or("interactive"))?,
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_defaults() {
        let text = "\
# run
[data]
field_dir = fields/a
train_years = 1, 2
test_year = 3

[model]
n = 1

[train]
epochs = 12
seed = 9
";
        let map = ConfigMap::parse(text).unwrap();
        assert_eq!(map.str("data.field_dir"), Some("fields/a"));
        assert_eq!(map.parse_or::<usize>("train.epochs", 0).unwrap(), 12);
        assert_eq!(map.parse_or::<usize>("train.batch_size", 96).unwrap(), 96);
    }

    #[test]
    fn run_config_rejects_test_year_leak() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "[data]\nfield_dir = f\ntrain_years = 1,3\ntest_year = 3\n",
        )
        .unwrap();
        let err = RunConfig::from_file(&path).unwrap_err();
        assert!(err.to_string().contains("must not appear"));
    }

    #[test]
    fn run_config_rejects_bad_n() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "[data]\nfield_dir = f\ntrain_years = 1\ntest_year = 2\n[model]\nn = 4\n",
        )
        .unwrap();
        assert!(RunConfig::from_file(&path).is_err());
    }

    #[test]
    fn synth_spec_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.cfg");
        std::fs::write(
            &path,
            "height = 32\nwidth = 40\nyears = 3\nseed = 5\nboundary = blob\nresponse = linear\n",
        )
        .unwrap();
        let spec = synth_spec_from_file(&path, None).unwrap();
        assert_eq!((spec.height, spec.width, spec.years), (32, 40, 3));
        assert_eq!(spec.boundary, BoundaryStyle::Blob);
        assert_eq!(spec.response, ResponseFamily::Linear);
        assert_eq!(spec.seed, 5);
        let spec2 = synth_spec_from_file(&path, Some(11)).unwrap();
        assert_eq!(spec2.seed, 11);
    }
}
