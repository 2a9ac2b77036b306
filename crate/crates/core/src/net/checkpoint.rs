//! Versioned binary checkpoint: model configuration, normalizer and every
//! network state block (trainable parameters plus batch-norm running
//! statistics) as named f64 arrays. Round-trips are bit-exact.

use super::{ModelConfig, Network};
use crate::error::{Error, Result};
use crate::normalize::Normalizer;
use crate::scalar::Scalar;
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 4] = b"YRCP";
const VERSION: u8 = 0x01;

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub network: Network<T>,
    pub normalizer: Normalizer<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.network.config
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let cfg = &self.network.config;
        out.extend_from_slice(&(cfg.window as u32).to_le_bytes());
        out.extend_from_slice(&(cfg.channels as u32).to_le_bytes());
        out.extend_from_slice(&(cfg.output as u32).to_le_bytes());
        out.extend_from_slice(&cfg.dropout.to_le_bytes());

        let channels = self.normalizer.channels();
        out.extend_from_slice(&(channels as u32).to_le_bytes());
        for c in 0..channels {
            out.extend_from_slice(&self.normalizer.min(c).as_f64().to_le_bytes());
            out.extend_from_slice(&self.normalizer.max(c).as_f64().to_le_bytes());
        }

        let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();
        self.network.visit_params(&mut |name, slice| {
            blocks.push((name.to_string(), slice.iter().map(|v| v.as_f64()).collect()));
        });
        self.network.visit_state(&mut |name, slice| {
            blocks.push((name.to_string(), slice.iter().map(|v| v.as_f64()).collect()));
        });
        out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
        for (name, values) in blocks {
            let bytes = name.as_bytes();
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(bytes);
            out.extend_from_slice(&(values.len() as u32).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut cur, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad checkpoint magic {:02x?}",
                magic
            )));
        }
        let mut version = [0u8; 1];
        read_exact(&mut cur, &mut version)?;
        if version[0] != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                version[0]
            )));
        }
        let window = read_u32(&mut cur)? as usize;
        let channels = read_u32(&mut cur)? as usize;
        let output = read_u32(&mut cur)? as usize;
        let dropout = read_f64(&mut cur)?;
        let config = ModelConfig {
            window,
            channels,
            output,
            dropout,
        };
        config.validate()?;

        let norm_channels = read_u32(&mut cur)? as usize;
        let mut mins = Vec::with_capacity(norm_channels);
        let mut maxs = Vec::with_capacity(norm_channels);
        for _ in 0..norm_channels {
            mins.push(T::from_f64(read_f64(&mut cur)?));
            maxs.push(T::from_f64(read_f64(&mut cur)?));
        }
        let normalizer = Normalizer::from_bounds(mins, maxs)?;

        let block_count = read_u32(&mut cur)? as usize;
        let mut blocks: HashMap<String, Vec<f64>> = HashMap::new();
        for _ in 0..block_count {
            let name_len = read_u32(&mut cur)? as usize;
            if name_len > 1024 {
                return Err(Error::Format("unreasonable block name length".into()));
            }
            let mut name_bytes = vec![0u8; name_len];
            read_exact(&mut cur, &mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| Error::Format("block name is not UTF-8".into()))?;
            let len = read_u32(&mut cur)? as usize;
            if len > (1 << 28) {
                return Err(Error::Format("unreasonable block length".into()));
            }
            let mut values = Vec::with_capacity(len);
            for _ in 0..len {
                values.push(read_f64(&mut cur)?);
            }
            blocks.insert(name, values);
        }

        let mut network = Network::zeros(config)?;
        let mut missing: Vec<String> = Vec::new();
        let mut fill = |name: &str, slice: &mut [T]| match blocks.remove(name) {
            Some(values) if values.len() == slice.len() => {
                for (dst, v) in slice.iter_mut().zip(values) {
                    *dst = T::from_f64(v);
                }
            }
            Some(values) => missing.push(format!(
                "{name}: stored {} values, expected {}",
                values.len(),
                slice.len()
            )),
            None => missing.push(format!("{name}: absent")),
        };
        network.visit_params_mut(&mut |name, slice| fill(name, slice));
        network.visit_state_mut(&mut |name, slice| fill(name, slice));
        if !missing.is_empty() {
            return Err(Error::Format(format!(
                "checkpoint blocks do not match the model: {}",
                missing.join("; ")
            )));
        }
        if !blocks.is_empty() {
            let extra: Vec<String> = blocks.keys().cloned().collect();
            return Err(Error::Format(format!(
                "checkpoint carries unknown blocks: {}",
                extra.join(", ")
            )));
        }
        Ok(Checkpoint {
            network,
            normalizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Structural description: block names with their shapes' lengths.
    pub fn block_layout(&self) -> Vec<(String, usize)> {
        let mut layout = Vec::new();
        self.network.visit_params(&mut |name, slice| {
            layout.push((name.to_string(), slice.len()));
        });
        self.network.visit_state(&mut |name, slice| {
            layout.push((name.to_string(), slice.len()));
        });
        layout
    }
}

fn read_exact(cur: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    cur.read_exact(buf)
        .map_err(|_| Error::Format("truncated checkpoint".to_string()))
}

fn read_u32(cur: &mut &[u8]) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(cur, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(cur: &mut &[u8]) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_exact(cur, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
