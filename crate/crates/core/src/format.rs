//! Gallery files: line-delimited JSON and the `EGAL` binary layout.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! "EGAL" | u32 version=1 | u32 D | u64 count
//! per record:
//!   u16 len + id | u16 len + make | u16 len + model | u8 flags
//!   bit0 track:   u16 len + utf-8
//!   bit1 frame:   u64
//!   bit2 quality: f64
//!   bit3 color:   u16 len + name, f64 score
//!   D x f32
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::embedding::{Color, EmbeddingRecord, Gallery};
use crate::error::{Error, Result};

pub const GALLERY_MAGIC: &[u8; 4] = b"EGAL";
pub const GALLERY_VERSION: u32 = 1;

const FLAG_TRACK: u8 = 1 << 0;
const FLAG_FRAME: u8 = 1 << 1;
const FLAG_QUALITY: u8 = 1 << 2;
const FLAG_COLOR: u8 = 1 << 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GalleryFormat {
    Jsonl,
    Binary,
}

impl GalleryFormat {
    /// `.egal` files are binary; everything else is read as JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("egal") => GalleryFormat::Binary,
            _ => GalleryFormat::Jsonl,
        }
    }
}

impl FromStr for GalleryFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(GalleryFormat::Jsonl),
            "binary" | "egal" => Ok(GalleryFormat::Binary),
            other => Err(Error::InvalidArgument(format!("unknown gallery format {other:?}"))),
        }
    }
}

pub fn load_gallery(path: &Path, format: GalleryFormat) -> Result<Gallery> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        GalleryFormat::Jsonl => read_jsonl(reader, &path.display().to_string()),
        GalleryFormat::Binary => read_binary(reader, &path.display().to_string()),
    }
}

/// Loads with the format implied by the file extension.
pub fn load_gallery_auto(path: &Path) -> Result<Gallery> {
    load_gallery(path, GalleryFormat::from_path(path))
}

pub fn save_gallery(gallery: &Gallery, path: &Path, format: GalleryFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        GalleryFormat::Jsonl => write_jsonl(gallery, &mut w),
        GalleryFormat::Binary => write_binary(gallery, &mut w),
    }
    .and_then(|_| w.flush())
    .map_err(|e| Error::io(path, e))
}

pub fn save_gallery_auto(gallery: &Gallery, path: &Path) -> Result<()> {
    save_gallery(gallery, path, GalleryFormat::from_path(path))
}

pub fn read_jsonl<R: BufRead>(reader: R, source: &str) -> Result<Gallery> {
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{source}:{}", lineno + 1), e.to_string()))?;
        records.push(record);
    }
    Gallery::new(records)
}

pub fn write_jsonl<W: Write>(gallery: &Gallery, mut w: W) -> std::io::Result<()> {
    for r in gallery.records() {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_binary<W: Write>(gallery: &Gallery, mut w: W) -> std::io::Result<()> {
    w.write_all(GALLERY_MAGIC)?;
    w.write_all(&GALLERY_VERSION.to_le_bytes())?;
    w.write_all(&(gallery.dimension() as u32).to_le_bytes())?;
    w.write_all(&(gallery.len() as u64).to_le_bytes())?;
    for r in gallery.records() {
        write_str(&mut w, &r.id)?;
        write_str(&mut w, &r.make)?;
        write_str(&mut w, &r.model)?;
        let mut flags = 0u8;
        if r.track_id.is_some() {
            flags |= FLAG_TRACK;
        }
        if r.frame.is_some() {
            flags |= FLAG_FRAME;
        }
        if r.quality.is_some() {
            flags |= FLAG_QUALITY;
        }
        if r.color.is_some() {
            flags |= FLAG_COLOR;
        }
        w.write_all(&[flags])?;
        if let Some(t) = &r.track_id {
            write_str(&mut w, t)?;
        }
        if let Some(f) = r.frame {
            w.write_all(&f.to_le_bytes())?;
        }
        if let Some(q) = r.quality {
            w.write_all(&q.to_le_bytes())?;
        }
        if let Some(c) = &r.color {
            write_str(&mut w, &c.name)?;
            w.write_all(&c.score.to_le_bytes())?;
        }
        for v in &r.vector {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("string of {} bytes exceeds u16 length prefix", s.len()),
        )
    })?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

/// Byte reader that tracks its offset for error reporting.
struct OffsetReader<'s, R> {
    inner: R,
    offset: u64,
    source: &'s str,
}

impl<R: Read> OffsetReader<'_, R> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(format!("{} @ byte {}", self.source, self.offset), message)
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| self.err(format!("truncated file: {e}")))?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| self.err(format!("truncated string: {e}")))?;
        let s = String::from_utf8(buf).map_err(|e| self.err(format!("invalid utf-8: {e}")))?;
        self.offset += len as u64;
        Ok(s)
    }
}

pub fn read_binary<R: Read>(reader: R, source: &str) -> Result<Gallery> {
    let mut r = OffsetReader {
        inner: reader,
        offset: 0,
        source,
    };
    let magic = r.bytes::<4>()?;
    if &magic != GALLERY_MAGIC {
        return Err(Error::parse(format!("{source} @ byte 0"), "bad magic, expected EGAL"));
    }
    let version = r.u32()?;
    if version != GALLERY_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let dimension = r.u32()? as usize;
    if dimension == 0 {
        return Err(r.err("dimension must be positive"));
    }
    let count = r.u64()?;
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let id = r.string()?;
        let make = r.string()?;
        let model = r.string()?;
        let flags = r.u8()?;
        if flags & !(FLAG_TRACK | FLAG_FRAME | FLAG_QUALITY | FLAG_COLOR) != 0 {
            return Err(r.err(format!("unknown flag bits {flags:#04x}")));
        }
        let track_id = if flags & FLAG_TRACK != 0 { Some(r.string()?) } else { None };
        let frame = if flags & FLAG_FRAME != 0 { Some(r.u64()?) } else { None };
        let quality = if flags & FLAG_QUALITY != 0 { Some(r.f64()?) } else { None };
        let color = if flags & FLAG_COLOR != 0 {
            let name = r.string()?;
            let score = r.f64()?;
            Some(Color { name, score })
        } else {
            None
        };
        let mut vector = Vec::with_capacity(dimension);
        for _ in 0..dimension {
            vector.push(r.f32()?);
        }
        records.push(EmbeddingRecord {
            id,
            make,
            model,
            track_id,
            frame,
            quality,
            color,
            vector,
        });
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing).map_err(|e| Error::io(source, e))? != 0 {
        return Err(r.err("trailing bytes after last record"));
    }
    if records.is_empty() {
        return Err(Error::EmptyGallery);
    }
    Gallery::with_dimension(dimension, records)
}
