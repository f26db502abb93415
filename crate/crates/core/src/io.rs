//! On-disk formats.
//!
//! All integers are little-endian `u32`, all payload values little-endian
//! `f64`.
//!
//! Dataset container (`CMCV`):
//!
//! ```text
//! magic      "CMCV"
//! version    u32 (= 1)
//! n_samples  u32
//! n_views    u32
//! per view:  name_len u32, name (UTF-8), ndim u32, dims u32 × ndim
//! has_labels u32 (0 or 1)
//! payload:   view 0 as n_samples × prod(dims) f64, view 1, ...,
//!            then n_samples labels stored as f64 when has_labels = 1
//! ```
//!
//! Checkpoint container (`CMCK`), used for encoders and memory banks:
//!
//! ```text
//! magic      "CMCK"
//! version    u32 (= 1)
//! n_tensors  u32
//! per tensor: name_len u32, name (UTF-8), ndim u32, dims u32 × ndim
//! payload:   each tensor's values in header order
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::views::Dataset;

pub const DATASET_MAGIC: &[u8; 4] = b"CMCV";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CMCK";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_name_shape(out: &mut Vec<u8>, name: &str, shape: &[usize]) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len())?;
    for &d in shape {
        put_u32(out, d)?;
    }
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, vals: &[f64]) {
    out.reserve(vals.len() * 8);
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "truncated input: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn name_shape(&mut self) -> Result<(String, Vec<usize>)> {
        let len = self.u32()?;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|e| Error::Format(format!("view name is not UTF-8: {e}")))?
            .to_string();
        let ndim = self.u32()?;
        if ndim == 0 || ndim > 8 {
            return Err(Error::Format(format!("implausible rank {ndim} for {name:?}")));
        }
        let shape = (0..ndim).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        Ok((name, shape))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4)?;
        if m != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION as usize {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize)?;
    put_u32(&mut out, ds.len())?;
    put_u32(&mut out, ds.view_names().len())?;
    for (name, shape) in ds.view_names().iter().zip(ds.view_shapes()) {
        put_name_shape(&mut out, name, shape)?;
    }
    put_u32(&mut out, usize::from(ds.labels().is_some()))?;
    for m in ds.matrices() {
        put_f64s(&mut out, m.data());
    }
    if let Some(labels) = ds.labels() {
        let l: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
        put_f64s(&mut out, &l);
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    c.header(DATASET_MAGIC)?;
    let n = c.u32()?;
    let n_views = c.u32()?;
    let mut names = Vec::with_capacity(n_views);
    let mut shapes = Vec::with_capacity(n_views);
    for _ in 0..n_views {
        let (name, shape) = c.name_shape()?;
        names.push(name);
        shapes.push(shape);
    }
    let has_labels = match c.u32()? {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("has_labels flag must be 0 or 1, got {v}"))),
    };
    let mut data = Vec::with_capacity(n_views);
    for shape in &shapes {
        let flat: usize = shape.iter().product();
        data.push(Tensor::matrix(n, flat, c.f64s(n * flat)?)?);
    }
    let labels = if has_labels {
        let raw = c.f64s(n)?;
        Some(
            raw.into_iter()
                .map(|v| {
                    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
                        Ok(v as usize)
                    } else {
                        Err(Error::Format(format!("label {v} is not a class index")))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    c.finish()?;
    Dataset::new(names, shapes, data, labels)
}

/// Named tensors written in order.
pub fn encode_checkpoint(entries: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize)?;
    put_u32(&mut out, entries.len())?;
    for (name, t) in entries {
        put_name_shape(&mut out, name, t.shape())?;
    }
    for (_, t) in entries {
        put_f64s(&mut out, t.data());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    c.header(CHECKPOINT_MAGIC)?;
    let n = c.u32()?;
    let heads = (0..n).map(|_| c.name_shape()).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(n);
    for (name, shape) in heads {
        let len = shape.iter().product();
        out.push((name, Tensor::new(shape, c.f64s(len)?)?));
    }
    c.finish()?;
    Ok(out)
}

pub fn write_dataset(path: &std::path::Path, ds: &Dataset) -> Result<()> {
    std::fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn read_dataset(path: &std::path::Path) -> Result<Dataset> {
    decode_dataset(&std::fs::read(path)?)
}

// ---------------------------------------------------------------------------
// PPM

/// Reads a binary `P6` image with maxval 255 into `[h×w×3]` values in `[0,1]`.
pub fn read_ppm<R: Read>(mut reader: R) -> Result<Tensor> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PPM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if tokens[0] != "P6" {
        return Err(Error::Format(format!("not a binary PPM (magic {})", tokens[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PPM header field {s:?}")))
    };
    let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("only maxval 255 is supported, got {maxval}")));
    }
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(Error::Format(format!(
            "PPM raster has {} bytes, expected {need}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let data = bytes[pos..pos + need].iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(vec![h, w, 3], data)
}

/// Writes `[h×w×3]` values in `[0,1]` as a binary `P6` image.
pub fn write_ppm<W: Write>(mut writer: W, image: &Tensor) -> Result<()> {
    let s = image.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(crate::error::shape_err("write_ppm", format!("expected [h×w×3], got {s:?}")));
    }
    write!(writer, "P6\n{} {}\n255\n", s[1], s[0])?;
    let raster: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    writer.write_all(&raster)?;
    Ok(())
}
