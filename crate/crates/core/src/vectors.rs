//! `TNNV` vector files: the byte protocol shared with the C harness.
//!
//! Layout: `b"TNNV"`, `u32` LE vector count, `u32` LE vector length, then
//! `count * length` binary32 LE values. Harness outputs produced with
//! `repeat > 1` carry one extra `u64` LE trailer holding the median
//! per-inference wall time in nanoseconds.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"TNNV";
const HEADER_BYTES: usize = 12;

#[derive(Debug, Error)]
pub enum VectorFileError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("file too short for its header ({0} bytes)")]
    Truncated(usize),
    #[error("payload holds {actual} bytes, header announces {expected}")]
    PayloadSize { expected: usize, actual: usize },
    #[error("{count} values cannot be split into vectors of length {length}")]
    Ragged { count: usize, length: usize },
    #[error("{0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile {
    length: usize,
    values: Vec<f32>,
    /// Median per-inference time in nanoseconds, when present.
    pub timing_ns: Option<u64>,
}

impl VectorFile {
    pub fn new(length: usize, values: Vec<f32>) -> Result<Self, VectorFileError> {
        if (length == 0 && !values.is_empty()) || (length > 0 && !values.len().is_multiple_of(length)) {
            return Err(VectorFileError::Ragged { count: values.len(), length });
        }
        Ok(VectorFile { length, values, timing_ns: None })
    }

    pub fn empty(length: usize) -> Self {
        VectorFile { length, values: Vec::new(), timing_ns: None }
    }

    pub fn from_vectors<'a>(length: usize, vectors: impl IntoIterator<Item = &'a [f32]>) -> Result<Self, VectorFileError> {
        let values: Vec<f32> = vectors.into_iter().flat_map(|v| v.iter().copied()).collect();
        Self::new(length, values)
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn count(&self) -> usize {
        self.values.len().checked_div(self.length).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn vector(&self, index: usize) -> &[f32] {
        &self.values[index * self.length..(index + 1) * self.length]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        // chunks_exact panics on 0; an empty file yields nothing either way.
        self.values.chunks_exact(self.length.max(1))
    }

    pub fn push(&mut self, vector: &[f32]) {
        assert_eq!(vector.len(), self.length, "vector length");
        self.values.extend_from_slice(vector);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + 4 * self.values.len() + 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.count() as u32).to_le_bytes());
        out.extend_from_slice(&(self.length as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(ns) = self.timing_ns {
            out.extend_from_slice(&ns.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VectorFileError> {
        if bytes.len() < HEADER_BYTES {
            return Err(VectorFileError::Truncated(bytes.len()));
        }
        let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
        if &magic != MAGIC {
            return Err(VectorFileError::BadMagic(magic));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let length = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let payload = count * length * 4;
        let rest = &bytes[HEADER_BYTES..];
        let timing_ns = match rest.len().checked_sub(payload) {
            Some(0) => None,
            Some(8) => Some(u64::from_le_bytes(rest[payload..].try_into().expect("8 bytes"))),
            _ => return Err(VectorFileError::PayloadSize { expected: payload, actual: rest.len() }),
        };
        let values = rest[..payload]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(VectorFile { length, values, timing_ns })
    }

    pub fn read(path: &Path) -> Result<Self, VectorFileError> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), VectorFileError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}
