//! The "FRST" binary raster container and a CSV import path for hand-built
//! test rasters.
//!
//! Layout: magic `FRST`, version byte 0x01, little-endian u32 height, u32
//! width, u32 channels, f64 cell size, `h*w*c` f32 values in (row, col,
//! channel) order, then `h*w` mask bytes (0/1). Masked-out cells are stored
//! as the canonical f32 NaN so write/read round-trips are byte-exact.

use crate::error::{Error, Result};
use crate::raster::{FieldRaster, Mask};
use crate::scalar::Scalar;
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 4] = b"FRST";
const VERSION: u8 = 0x01;
/// Upper bound on cells per axis and on total payload entries.
const DIM_LIMIT: u32 = 1 << 24;

pub fn to_bytes<T: Scalar>(raster: &FieldRaster<T>) -> Vec<u8> {
    let (h, w, c) = (raster.height(), raster.width(), raster.channels());
    let mut out = Vec::with_capacity(25 + h * w * c * 4 + h * w);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&raster.cell_size().to_le_bytes());
    for row in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let v = if raster.mask().get(row, col) {
                    raster.get(row, col, ch).as_f32()
                } else {
                    f32::NAN
                };
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    for row in 0..h {
        for col in 0..w {
            out.push(u8::from(raster.mask().get(row, col)));
        }
    }
    out
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<FieldRaster<T>> {
    let mut cur = bytes;
    let mut header = [0u8; 4];
    read_exact(&mut cur, &mut header)?;
    if &header != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:02x?}, expected \"FRST\"",
            header
        )));
    }
    let mut version = [0u8; 1];
    read_exact(&mut cur, &mut version)?;
    if version[0] != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {}",
            version[0]
        )));
    }
    let h = read_u32(&mut cur)?;
    let w = read_u32(&mut cur)?;
    let c = read_u32(&mut cur)?;
    if h == 0 || w == 0 || c == 0 || h > DIM_LIMIT || w > DIM_LIMIT || c > DIM_LIMIT {
        return Err(Error::Format(format!("bad dimensions {h}x{w}x{c}")));
    }
    let cells = (h as u64) * (w as u64) * (c as u64);
    if cells > DIM_LIMIT as u64 {
        return Err(Error::Format(format!(
            "dimension overflow: {h}x{w}x{c} exceeds the payload limit"
        )));
    }
    let mut cs = [0u8; 8];
    read_exact(&mut cur, &mut cs)?;
    let cell_size = f64::from_le_bytes(cs);

    let (h, w, c) = (h as usize, w as usize, c as usize);
    let mut data = Vec::with_capacity(h * w * c);
    let mut buf = [0u8; 4];
    for _ in 0..h * w * c {
        read_exact(&mut cur, &mut buf)?;
        data.push(T::from_f32(f32::from_le_bytes(buf)));
    }
    let mut bits = Vec::with_capacity(h * w);
    let mut byte = [0u8; 1];
    for _ in 0..h * w {
        read_exact(&mut cur, &mut byte)?;
        match byte[0] {
            0 => bits.push(false),
            1 => bits.push(true),
            other => {
                return Err(Error::Format(format!("mask byte must be 0/1, got {other}")));
            }
        }
    }
    let mask = Mask::from_bits(h, w, bits)?;
    FieldRaster::from_parts(h, w, c, cell_size, data, mask)
}

fn read_exact(cur: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    cur.read_exact(buf)
        .map_err(|_| Error::Format("truncated payload".to_string()))
}

fn read_u32(cur: &mut &[u8]) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(cur, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_raster<T: Scalar>(raster: &FieldRaster<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(raster))?;
    Ok(())
}

pub fn read_raster<T: Scalar>(path: &Path) -> Result<FieldRaster<T>> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}

/// Import a hand-built raster from `row,col,channel,value` lines. Dimensions
/// are inferred from the largest indices; a cell must supply every channel to
/// count as masked-in. Lines starting with `#` are comments.
pub fn read_csv<T: Scalar>(text: &str, cell_size: f64) -> Result<FieldRaster<T>> {
    let mut entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "line {}: expected `row,col,channel,value`",
                ln + 1
            )));
        }
        let parse_idx = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Format(format!("line {}: bad index `{s}`", ln + 1)))
        };
        let value: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Format(format!("line {}: bad value `{}`", ln + 1, fields[3])))?;
        entries.push((
            parse_idx(fields[0])?,
            parse_idx(fields[1])?,
            parse_idx(fields[2])?,
            value,
        ));
    }
    if entries.is_empty() {
        return Err(Error::Format("CSV raster has no data lines".to_string()));
    }
    let height = entries.iter().map(|e| e.0).max().unwrap() + 1;
    let width = entries.iter().map(|e| e.1).max().unwrap() + 1;
    let channels = entries.iter().map(|e| e.2).max().unwrap() + 1;

    let mut filled = vec![0usize; height * width];
    let mut raster = FieldRaster::new(height, width, channels, cell_size);
    for (row, col, ch, value) in entries {
        raster.set(row, col, ch, T::from_f64(value));
        filled[row * width + col] += 1;
    }
    // a cell missing any channel is treated as masked-out
    for row in 0..height {
        for col in 0..width {
            if filled[row * width + col] < channels {
                raster.clear_cell(row, col);
            }
        }
    }
    Ok(raster)
}
