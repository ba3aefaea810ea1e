//! Tensor file format: magic `DSPE`, version byte, rank byte, u32
//! little-endian dims, then the payload as IEEE-754 binary32 little-endian
//! in row-major order. Trivially parseable from any language.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"DSPE";
pub const VERSION: u8 = 1;

/// A dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Tensor {
        debug_assert_eq!(
            dims.iter().map(|&d| d as usize).product::<usize>(),
            data.len()
        );
        Tensor { dims, data }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("bad magic at offset 0: expected \"DSPE\"")]
    BadMagic,
    #[error("unsupported version {version} at offset 4")]
    BadVersion { version: u8 },
    #[error("file truncated at offset {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("dimension product overflows at offset {offset}")]
    DimOverflow { offset: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Write a tensor; the round trip through [`load_tensor`] is bit-exact.
pub fn save_tensor(path: &Path, tensor: &Tensor) -> Result<(), TensorError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&[VERSION, tensor.dims.len() as u8])?;
    for &d in &tensor.dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for &x in &tensor.data {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor, TensorError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_tensor(&bytes)
}

/// Parse the byte form; errors carry the byte offset of the problem.
pub fn parse_tensor(bytes: &[u8]) -> Result<Tensor, TensorError> {
    let need = |offset: usize, n: usize| -> Result<(), TensorError> {
        if bytes.len() < offset + n {
            Err(TensorError::Truncated {
                offset: bytes.len(),
                needed: offset + n - bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(0, 4)?;
    if bytes[0..4] != MAGIC {
        return Err(TensorError::BadMagic);
    }
    need(4, 2)?;
    let version = bytes[4];
    if version != VERSION {
        return Err(TensorError::BadVersion { version });
    }
    let rank = bytes[5] as usize;
    need(6, rank * 4)?;
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 6 + i * 4;
        dims.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
    }
    let payload_off = 6 + rank * 4;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|n| n.checked_mul(4))
        .ok_or(TensorError::DimOverflow { offset: payload_off })?;
    need(payload_off, count)?;
    let data = bytes[payload_off..payload_off + count]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor {
        dims,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.dspe");
        let tensor = Tensor::new(vec![2, 3], vec![1.0, -2.5, 0.0, f32::MIN, f32::MAX, 0.125]);
        save_tensor(&path, &tensor).unwrap();
        assert_eq!(load_tensor(&path).unwrap(), tensor);
    }

    #[test]
    fn wrong_magic_fails_at_offset_zero() {
        let err = parse_tensor(b"XSPE\x01\x00").unwrap_err();
        assert!(matches!(err, TensorError::BadMagic));
        assert!(err.to_string().contains("offset 0"));
    }

    #[test]
    fn truncation_names_the_offset() {
        let tensor = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.dspe");
        save_tensor(&path, &tensor).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let err = parse_tensor(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, TensorError::Truncated { .. }));
    }

    #[test]
    fn dim_overflow_detected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.push(VERSION);
        bytes.push(3);
        for _ in 0..3 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(
            parse_tensor(&bytes),
            Err(TensorError::DimOverflow { .. })
        ));
    }

    #[test]
    fn golden_file_decodes_exactly() {
        let bytes = include_bytes!("../../tests/data/golden.dspe");
        let tensor = parse_tensor(bytes).unwrap();
        assert_eq!(tensor.dims, vec![2, 4]);
        assert_eq!(
            tensor.data,
            vec![0.0, 1.0, -1.0, 0.5, -0.25, 3.0, -128.0, 0.0078125]
        );
    }
}
