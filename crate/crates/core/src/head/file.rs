//! `EHED` head files.
//!
//! ```text
//! "EHED" | u32 version=1 | u32 header length | JSON header
//! C x D little-endian f32 centroids (row-major)
//! C little-endian f32 bias (biased heads only)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HeadModel, Variant};
use crate::error::{Error, Result};

pub const HEAD_MAGIC: &[u8; 4] = b"EHED";
pub const HEAD_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    labels: Vec<String>,
    dimension: usize,
    classes: usize,
    variant: Variant,
    seed: u64,
}

pub fn write_head<W: Write>(m: &HeadModel, mut w: W) -> std::io::Result<()> {
    let header = Header {
        labels: m.labels().to_vec(),
        dimension: m.dimension(),
        classes: m.class_count(),
        variant: m.variant(),
        seed: m.seed(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(HEAD_MAGIC)?;
    w.write_all(&HEAD_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for v in m.centroids() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    if let Some(b) = m.bias() {
        for v in b {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a head. Values come back at f32 precision; prior-free rows are
/// re-checked against the unit-norm tolerance.
pub fn read_head<R: Read>(mut r: R, source: &str) -> Result<HeadModel> {
    let bad = |msg: String| Error::parse(source, msg);
    let mut buf4 = [0u8; 4];
    let mut read4 = |r: &mut R, what: &str| -> Result<[u8; 4]> {
        r.read_exact(&mut buf4)
            .map_err(|e| bad(format!("truncated {what}: {e}")))?;
        Ok(buf4)
    };
    if &read4(&mut r, "magic")? != HEAD_MAGIC {
        return Err(bad("bad magic, expected EHED".into()));
    }
    let version = u32::from_le_bytes(read4(&mut r, "version")?);
    if version != HEAD_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(read4(&mut r, "header length")?) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|e| bad(format!("truncated header: {e}")))?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| bad(format!("header: {e}")))?;
    if header.classes != header.labels.len() {
        return Err(bad(format!(
            "header lists {} labels for {} classes",
            header.labels.len(),
            header.classes
        )));
    }
    let mut read_block = |n: usize, what: &str| -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)
            .map_err(|e| bad(format!("truncated {what}: {e}")))?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    };
    let centroids = read_block(header.classes * header.dimension, "centroids")?;
    let bias = match header.variant {
        Variant::Biased => Some(read_block(header.classes, "bias")?),
        Variant::PriorFree => None,
    };
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| Error::io(source, e))?;
    if !rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", rest.len())));
    }
    HeadModel::new(
        header.labels,
        header.dimension,
        centroids,
        bias,
        header.variant,
        header.seed,
    )
}

pub fn save_head(m: &HeadModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_head(m, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_head(path: &Path) -> Result<HeadModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_head(BufReader::new(file), &path.display().to_string())
}
