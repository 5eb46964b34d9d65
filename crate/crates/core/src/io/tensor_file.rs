//! Binary tensor and filter files.
//!
//! Tensor file (`.sacc`), all little-endian:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `SACC`                           |
//! | 4      | 4    | version, u32 = 1                       |
//! | 8      | 4    | channels, u32                          |
//! | 12     | 4    | rows, u32                              |
//! | 16     | 4    | cols, u32                              |
//! | 20     | 2·N  | i16 payload, channel-major             |
//!
//! Filter file (`.sacw`): magic `SACW`, version u32 = 1, then `m`, `ic`, `fh`,
//! `fl` as u32, `m·ic·fh·fl` i16 weights (filter, channel, row, column order)
//! and `m` i32 biases.

use std::path::Path;

use super::IoError;
use crate::tensor::{FilterSet, Tensor};

const TENSOR_MAGIC: &[u8; 4] = b"SACC";
const FILTER_MAGIC: &[u8; 4] = b"SACW";
const VERSION: u32 = 1;

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 2 * t.data().len());
    out.extend_from_slice(TENSOR_MAGIC);
    for word in [
        VERSION,
        t.channels() as u32,
        t.rows() as u32,
        t.cols() as u32,
    ] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(IoError::Format(format!(
                "truncated file: wanted {} bytes at offset {}, have {}",
                n,
                self.pos,
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<(), IoError> {
        let got = self.take(4)?;
        if got != magic {
            return Err(IoError::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(IoError::Format(format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn i16s(&mut self, count: usize) -> Result<Vec<i16>, IoError> {
        Ok(self
            .take(2 * count)?
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect())
    }

    fn i32s(&mut self, count: usize) -> Result<Vec<i32>, IoError> {
        Ok(self
            .take(4 * count)?
            .chunks_exact(4)
            .map(|b| i32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<(), IoError> {
        if self.pos != self.bytes.len() {
            return Err(IoError::Format(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor, IoError> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(TENSOR_MAGIC)?;
    let (c, rows, cols) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let data = r.i16s(c * rows * cols)?;
    r.finish()?;
    Ok(Tensor::new(c, rows, cols, data)?)
}

pub fn encode_filters(f: &FilterSet) -> Vec<u8> {
    let (m, ic, fh, fl) = f.dims();
    let mut out = Vec::with_capacity(24 + 2 * f.weights().len() + 4 * m);
    out.extend_from_slice(FILTER_MAGIC);
    for word in [VERSION, m as u32, ic as u32, fh as u32, fl as u32] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for w in f.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for b in f.biases() {
        out.extend_from_slice(&b.to_le_bytes());
    }
    out
}

pub fn decode_filters(bytes: &[u8]) -> Result<FilterSet, IoError> {
    let mut r = Reader { bytes, pos: 0 };
    r.header(FILTER_MAGIC)?;
    let (m, ic, fh, fl) = (
        r.u32()? as usize,
        r.u32()? as usize,
        r.u32()? as usize,
        r.u32()? as usize,
    );
    let weights = r.i16s(m * ic * fh * fl)?;
    let biases = r.i32s(m)?;
    r.finish()?;
    Ok(FilterSet::new(m, ic, fh, fl, weights, biases)?)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<(), IoError> {
    std::fs::write(path, encode_tensor(t)).map_err(|e| IoError::file(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::file(path, e))?;
    decode_tensor(&bytes)
}

pub fn write_filters(path: &Path, f: &FilterSet) -> Result<(), IoError> {
    std::fs::write(path, encode_filters(f)).map_err(|e| IoError::file(path, e))
}

pub fn read_filters(path: &Path) -> Result<FilterSet, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::file(path, e))?;
    decode_filters(&bytes)
}
