use std::ops::Range;
use std::path::Path;

use super::{io_err, DataError, Result};

const UBYTE: u8 = 0x08;

/// An unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(DataError::ShapeMismatch(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// Values in `range` divided by 255.
    pub fn scaled(&self, range: Range<usize>) -> Vec<f64> {
        self.data[range].iter().map(|&b| f64::from(b) / 255.0).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&[0, 0, UBYTE, self.dims.len() as u8]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(DataError::TruncatedFile {
            expected: 4,
            found: bytes.len(),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(DataError::BadMagic(format!(
            "IDX header starts with {:02x} {:02x}, expected 00 00",
            bytes[0], bytes[1]
        )));
    }
    if bytes[2] != UBYTE {
        return Err(DataError::UnsupportedDtype(bytes[2]));
    }
    let rank = usize::from(bytes[3]);
    if rank == 0 {
        return Err(DataError::BadMagic("IDX rank 0".into()));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(DataError::TruncatedFile {
            expected: header,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| DataError::BadMagic(format!("IDX dims {dims:?} overflow")))?;
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(DataError::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..expected].to_vec(),
    })
}

pub fn load_idx(path: &Path) -> Result<IdxTensor> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    parse_idx(&bytes)
}

pub fn write_idx(path: &Path, tensor: &IdxTensor) -> Result<()> {
    std::fs::write(path, tensor.to_bytes()).map_err(io_err(path))
}
