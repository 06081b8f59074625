//! `EFCKPT01` weight files.
//!
//! Layout: the 8 magic bytes, a little-endian `u32` layer count, then for each layer
//! `rows: u32`, `cols: u32`, `rows * cols` row-major `f64` weights and `rows` `f64`
//! biases, all little-endian.

use std::fs;
use std::path::Path;

use efkd_core::nn::{Dense, MlpParams};
use efkd_core::Matrix;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"EFCKPT01";

pub fn encode(params: &MlpParams) -> Vec<u8> {
    let floats: usize = params.layers.iter().map(|l| l.weight.data().len() + l.bias.len()).sum();
    let mut out = Vec::with_capacity(12 + 8 * params.layers.len() + 8 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for layer in &params.layers {
        out.extend_from_slice(&(layer.weight.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.weight.cols() as u32).to_le_bytes());
        for v in layer.weight.data().iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::Data(format!("checkpoint truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| CliError::Data("checkpoint layer too large".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<MlpParams> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8).ok() != Some(&MAGIC[..]) {
        return Err(CliError::Data("not an EFCKPT01 checkpoint".into()));
    }
    let count = r.u32()?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let rows = r.u32()?;
        let cols = r.u32()?;
        let weight = r.f64s(rows * cols)?;
        let bias = r.f64s(rows)?;
        layers.push(Dense {
            weight: Matrix::new(rows, cols, weight)?,
            bias,
        });
    }
    if r.at != bytes.len() {
        return Err(CliError::Data(format!("{} trailing bytes after checkpoint", bytes.len() - r.at)));
    }
    let params = MlpParams { layers };
    params.spec().map_err(|e| CliError::Data(format!("checkpoint layers do not chain: {e}")))?;
    Ok(params)
}

pub fn save(path: &Path, params: &MlpParams) -> Result<()> {
    fs::write(path, encode(params)).map_err(CliError::io(path))
}

pub fn load(path: &Path) -> Result<MlpParams> {
    decode(&fs::read(path).map_err(CliError::io(path))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use efkd_core::nn::{init_params, MlpSpec};

    #[test]
    fn header_layout() {
        let p = init_params(&MlpSpec::new(vec![3, 2]).unwrap(), 0);
        let b = encode(&p);
        assert_eq!(&b[..8], b"EFCKPT01");
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(&b[12..16], &2u32.to_le_bytes());
        assert_eq!(&b[16..20], &3u32.to_le_bytes());
        assert_eq!(b.len(), 20 + 8 * (6 + 2));
        assert_eq!(&b[20..28], &p.layers[0].weight.get(0, 0).to_le_bytes());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let b = encode(&init_params(&MlpSpec::new(vec![4, 3, 2]).unwrap(), 1));
        assert!(decode(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut magic = b.clone();
        magic[7] = b'2';
        assert!(decode(&magic).is_err());
        assert_eq!(decode(&b[..5]).unwrap_err().exit_code(), 2);
    }
}
