//! Binary file formats for tensors and quantization artifacts.
//!
//! Tensor file (`WTQ1`), all integers little-endian:
//!
//! ```text
//! offset  size       field
//! 0       4          magic "WTQ1"
//! 4       1          dtype: 0 = binary32, 1 = binary64
//! 5       1          ndim (u8)
//! 6       3          reserved, written as zero
//! 9       8 * ndim   dims (u64 each)
//! ...     payload    elements, IEEE-754 little-endian, row-major
//! ```
//!
//! Artifact file (`WTQA`):
//!
//! ```text
//! magic "WTQA"; u8 method (0 uniform, 1 ot, 2 pwl, 3 log2); u8 bits;
//! u32 channels; u8 ndim; ndim * u64 dims (the original tensor shape);
//! then per channel: 2^bits binary64 codebook levels, the channel's
//! assignment indices (u8 when bits <= 8, else u16), and one binary64
//! range_meta scalar.
//! ```
//!
//! Both layouts have sizes exactly computable from their header fields, and
//! every parse error carries the byte offset it was detected at.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;
use wtq_core::tensor::{
    channel_element_count, element_count, Dtype, QuantArtifact, QuantMethod, TensorContainer,
    TensorData, TensorError,
};

pub const TENSOR_MAGIC: [u8; 4] = *b"WTQ1";
pub const ARTIFACT_MAGIC: [u8; 4] = *b"WTQA";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic at byte {offset}: found {found:?}, expected {expected:?}")]
    BadMagic {
        offset: u64,
        found: [u8; 4],
        expected: [u8; 4],
    },
    #[error("truncated payload: needed {needed} bytes at byte {offset}")]
    Truncated { offset: u64, needed: usize },
    #[error("non-finite element at byte {offset}")]
    NonFinite { offset: u64 },
    #[error("invalid {what} at byte {offset}")]
    InvalidField { offset: u64, what: &'static str },
    #[error("assignment index {index} out of range (< {limit}) at byte {offset}")]
    IndexOutOfRange { offset: u64, index: u32, limit: u32 },
    #[error("{extra} trailing bytes after payload at byte {offset}")]
    TrailingBytes { offset: u64, extra: usize },
    #[error("value does not fit the format: {0}")]
    Unrepresentable(&'static str),
    #[error("invalid structure: {0}")]
    Structure(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated {
                offset: self.offset(),
                needed: n,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn expect_magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let offset = self.offset();
        let got = self.take(4)?;
        if got != expected {
            return Err(FormatError::BadMagic {
                offset,
                found: got.try_into().unwrap(),
                expected,
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return Err(FormatError::TrailingBytes {
                offset: self.offset(),
                extra: self.buf.len() - self.pos,
            });
        }
        Ok(())
    }
}

fn read_dims(r: &mut Reader<'_>) -> Result<Vec<usize>, FormatError> {
    let ndim = r.u8()? as usize;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let offset = r.offset();
        let d = r.u64()?;
        let d = usize::try_from(d).map_err(|_| FormatError::InvalidField {
            offset,
            what: "dimension size",
        })?;
        dims.push(d);
    }
    Ok(dims)
}

/// Serialize a tensor into the `WTQ1` layout.
pub fn tensor_to_bytes(t: &TensorContainer) -> Result<Vec<u8>, FormatError> {
    if t.shape().len() > u8::MAX as usize {
        return Err(FormatError::Unrepresentable("more than 255 dimensions"));
    }
    let mut out = Vec::with_capacity(9 + 8 * t.shape().len() + t.len() * t.dtype().size());
    out.extend_from_slice(&TENSOR_MAGIC);
    out.push(t.dtype().code());
    out.push(t.shape().len() as u8);
    out.extend_from_slice(&[0, 0, 0]);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match t.data() {
        TensorData::F32(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        TensorData::F64(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Parse the `WTQ1` layout.
pub fn tensor_from_bytes(buf: &[u8]) -> Result<TensorContainer, FormatError> {
    let mut r = Reader::new(buf);
    r.expect_magic(TENSOR_MAGIC)?;
    let dtype_offset = r.offset();
    let dtype = Dtype::from_code(r.u8()?).ok_or(FormatError::InvalidField {
        offset: dtype_offset,
        what: "dtype",
    })?;
    let ndim_offset = r.offset();
    let ndim = r.u8()?;
    r.take(3)?; // reserved
    let mut shape = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        let offset = r.offset();
        let d = r.u64()?;
        let d = usize::try_from(d).map_err(|_| FormatError::InvalidField {
            offset,
            what: "dimension size",
        })?;
        shape.push(d);
    }
    let count = element_count(&shape).map_err(|_| FormatError::InvalidField {
        offset: ndim_offset,
        what: "shape product",
    })?;
    let data = match dtype {
        Dtype::F32 => {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                let offset = r.offset();
                let x = r.f32()?;
                if !x.is_finite() {
                    return Err(FormatError::NonFinite { offset });
                }
                v.push(x);
            }
            TensorData::F32(v)
        }
        Dtype::F64 => {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                let offset = r.offset();
                let x = r.f64()?;
                if !x.is_finite() {
                    return Err(FormatError::NonFinite { offset });
                }
                v.push(x);
            }
            TensorData::F64(v)
        }
    };
    r.finish()?;
    Ok(TensorContainer::new(shape, data)?)
}

pub fn write_tensor(t: &TensorContainer, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let bytes = tensor_to_bytes(t)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorContainer, FormatError> {
    let buf = fs::read(path)?;
    tensor_from_bytes(&buf)
}

fn index_width(bits: u8) -> usize {
    if bits <= 8 {
        1
    } else {
        2
    }
}

/// Serialize an artifact into the `WTQA` layout.
pub fn artifact_to_bytes(a: &QuantArtifact) -> Result<Vec<u8>, FormatError> {
    if a.original_shape().len() > u8::MAX as usize {
        return Err(FormatError::Unrepresentable("more than 255 dimensions"));
    }
    if a.channels() > u32::MAX as usize {
        return Err(FormatError::Unrepresentable("more than u32::MAX channels"));
    }
    let k = a.levels_per_channel();
    let width = index_width(a.bits());
    let per: usize = a.assignments().iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(
        11 + 8 * a.original_shape().len() + a.channels() * (k * 8 + 8) + per * width,
    );
    out.extend_from_slice(&ARTIFACT_MAGIC);
    out.push(a.method().code());
    out.push(a.bits());
    out.extend_from_slice(&(a.channels() as u32).to_le_bytes());
    out.push(a.original_shape().len() as u8);
    for &d in a.original_shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for ch in 0..a.channels() {
        for level in &a.codebooks()[ch] {
            out.extend_from_slice(&level.to_le_bytes());
        }
        for &idx in &a.assignments()[ch] {
            match width {
                1 => out.push(idx as u8),
                _ => out.extend_from_slice(&(idx as u16).to_le_bytes()),
            }
        }
        out.extend_from_slice(&a.range_meta()[ch].to_le_bytes());
    }
    Ok(out)
}

/// Parse the `WTQA` layout, validating every invariant with byte offsets.
pub fn artifact_from_bytes(buf: &[u8]) -> Result<QuantArtifact, FormatError> {
    let mut r = Reader::new(buf);
    r.expect_magic(ARTIFACT_MAGIC)?;
    let method_offset = r.offset();
    let method = QuantMethod::from_code(r.u8()?).ok_or(FormatError::InvalidField {
        offset: method_offset,
        what: "method",
    })?;
    let bits_offset = r.offset();
    let bits = r.u8()?;
    if !(1..=16).contains(&bits) {
        return Err(FormatError::InvalidField {
            offset: bits_offset,
            what: "bits",
        });
    }
    let channels_offset = r.offset();
    let channels = r.u32()? as usize;
    let shape = read_dims(&mut r)?;
    let per_channel = if channels == 0 {
        0
    } else {
        channel_element_count(&shape, channels).map_err(|_| FormatError::InvalidField {
            offset: channels_offset,
            what: "channel count vs shape",
        })?
    };
    let k = 1usize << bits;
    let limit = k as u32;
    let width = index_width(bits);
    let mut codebooks = Vec::with_capacity(channels);
    let mut assignments = Vec::with_capacity(channels);
    let mut range_meta = Vec::with_capacity(channels);
    for _ in 0..channels {
        let mut levels = Vec::with_capacity(k);
        for i in 0..k {
            let offset = r.offset();
            let x = r.f64()?;
            if !x.is_finite() {
                return Err(FormatError::NonFinite { offset });
            }
            if i > 0 && x < levels[i - 1] {
                return Err(FormatError::InvalidField {
                    offset,
                    what: "codebook order",
                });
            }
            levels.push(x);
        }
        let mut asg = Vec::with_capacity(per_channel);
        for _ in 0..per_channel {
            let offset = r.offset();
            let idx = match width {
                1 => r.u8()? as u32,
                _ => r.u16()? as u32,
            };
            if idx >= limit {
                return Err(FormatError::IndexOutOfRange {
                    offset,
                    index: idx,
                    limit,
                });
            }
            asg.push(idx);
        }
        let offset = r.offset();
        let meta = r.f64()?;
        if !meta.is_finite() {
            return Err(FormatError::NonFinite { offset });
        }
        codebooks.push(levels);
        assignments.push(asg);
        range_meta.push(meta);
    }
    r.finish()?;
    Ok(QuantArtifact::new(
        method,
        bits,
        codebooks,
        assignments,
        shape,
        range_meta,
    )?)
}

pub fn write_artifact(a: &QuantArtifact, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let bytes = artifact_to_bytes(a)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_artifact(path: impl AsRef<Path>) -> Result<QuantArtifact, FormatError> {
    let buf = fs::read(path)?;
    artifact_from_bytes(&buf)
}
