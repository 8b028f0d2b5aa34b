//! On-disk formats.
//!
//! Float grid (`.fgrid`): an ASCII header line `FGRID 1 <ndim> <d0> … <dn-1>`
//! terminated by `\n`, followed by `Π d_i` little-endian `f64` values in
//! row-major order.
//!
//! Dataset directory: `dataset.json` plus `x_NNNN.fgrid` / `y_NNNN.fgrid`
//! per sample.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::training::{Dataset, Sample, Split};

const FGRID_MAGIC: &str = "FGRID";
const FGRID_VERSION: u32 = 1;

pub fn encode_grid(t: &Tensor) -> Vec<u8> {
    let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
    let mut out = format!("{FGRID_MAGIC} {FGRID_VERSION} {} {}\n", t.shape().len(), dims.join(" ")).into_bytes();
    out.reserve(t.len() * 8);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<Tensor> {
    let fmt = |m: &str| Error::Format(format!("float grid: {m}"));
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| fmt("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| fmt("header is not UTF-8"))?;
    let mut parts = header.split_ascii_whitespace();
    if parts.next() != Some(FGRID_MAGIC) {
        return Err(fmt("bad magic"));
    }
    let version: u32 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| fmt("bad version"))?;
    if version != FGRID_VERSION {
        return Err(fmt(&format!("unsupported version {version}")));
    }
    let ndim: usize = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| fmt("bad ndim"))?;
    let shape: Vec<usize> = parts.map(|d| d.parse().map_err(|_| fmt("bad dimension"))).collect::<Result<_>>()?;
    if shape.len() != ndim {
        return Err(fmt("dimension count mismatch"));
    }
    let body = &bytes[nl + 1..];
    let n: usize = shape.iter().product();
    if body.len() != n * 8 {
        return Err(fmt(&format!("expected {} data bytes, found {}", n * 8, body.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Tensor::new(shape, data)
}

pub fn write_grid(path: impl AsRef<FsPath>, t: &Tensor) -> Result<()> {
    fs::write(path, encode_grid(t))?;
    Ok(())
}

pub fn read_grid(path: impl AsRef<FsPath>) -> Result<Tensor> {
    decode_grid(&fs::read(path)?)
}

/// Binary PBM (P4) of a 0/1 mask; the last two axes are the image.
pub fn write_pbm(path: impl AsRef<FsPath>, mask: &Tensor) -> Result<()> {
    let (h, w) = mask.hw()?;
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let d = mask.data();
    for r in 0..h {
        let mut row = vec![0u8; w.div_ceil(8)];
        for c in 0..w {
            if d[r * w + c] != 0.0 {
                row[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Binary PGM (P5); values are mapped linearly from `[lo, hi]` to 0..=255.
pub fn write_pgm(path: impl AsRef<FsPath>, img: &Tensor, lo: f64, hi: f64) -> Result<()> {
    let (h, w) = img.hw()?;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    out.extend(img.data()[..h * w].iter().map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub split: Split,
    pub count: usize,
    pub x_shape: Vec<usize>,
    pub y_shape: Vec<usize>,
}

pub fn sample_paths(dir: &FsPath, i: usize) -> (PathBuf, PathBuf) {
    (dir.join(format!("x_{i:04}.fgrid")), dir.join(format!("y_{i:04}.fgrid")))
}

/// Write a dataset directory; returns the written file paths.
pub fn write_dataset(dir: impl AsRef<FsPath>, data: &Dataset) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let first = data.samples().first();
    let header = DatasetHeader {
        split: data.split,
        count: data.len(),
        x_shape: first.map(|s| s.x.shape().to_vec()).unwrap_or_default(),
        y_shape: first.map(|s| s.y.shape().to_vec()).unwrap_or_default(),
    };
    let hp = dir.join("dataset.json");
    fs::write(&hp, serde_json::to_string_pretty(&header).expect("header serializes"))?;
    let mut files = vec![hp];
    for (i, s) in data.iter().enumerate() {
        let (xp, yp) = sample_paths(dir, i);
        write_grid(&xp, &s.x)?;
        write_grid(&yp, &s.y)?;
        files.push(xp);
        files.push(yp);
    }
    Ok(files)
}

pub fn read_dataset(dir: impl AsRef<FsPath>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let header: DatasetHeader = serde_json::from_str(&fs::read_to_string(dir.join("dataset.json"))?)
        .map_err(|e| Error::Format(format!("dataset header: {e}")))?;
    let samples = (0..header.count)
        .map(|i| {
            let (xp, yp) = sample_paths(dir, i);
            Ok(Sample { x: read_grid(xp)?, y: read_grid(yp)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, header.split)
}

pub fn sha256_file(path: impl AsRef<FsPath>) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Format a float for CSV output so that it round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.17e}")
    }
}

/// Write a CSV with a fixed header.
pub fn write_csv(path: impl AsRef<FsPath>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::training::csv_err)?;
    w.write_record(header).map_err(crate::training::csv_err)?;
    for r in rows {
        w.write_record(r).map_err(crate::training::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `text` to `path`, creating the parent directory.
pub fn write_text(path: impl AsRef<FsPath>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
