//! Binary state snapshots: 8-byte magic, mode count as little-endian `u64`,
//! then the coefficients as little-endian `f64`.

use crate::error::{Error, Result};
use crate::spectral::{DensityField, SpectralBasis};
use std::io::{Read, Write};

pub const MAGIC: [u8; 8] = *b"REPTSNP1";
pub const HEADER_LEN: usize = 16;

pub fn encode(state: &DensityField) -> Vec<u8> {
    let c = state.coeffs();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * c.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(c.len() as u64).to_le_bytes());
    for v in c {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(basis: &SpectralBasis, bytes: &[u8]) -> Result<DensityField> {
    if bytes.len() < HEADER_LEN || bytes[..8] != MAGIC {
        return Err(Error::Config("not a snapshot file".into()));
    }
    let k = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    if bytes.len() != HEADER_LEN + 8 * k {
        return Err(Error::Config(format!(
            "snapshot length {} does not match {k} modes",
            bytes.len()
        )));
    }
    let coeffs = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    DensityField::from_coeffs(basis, coeffs)
}

pub fn write_to<W: Write>(mut w: W, state: &DensityField) -> std::io::Result<()> {
    w.write_all(&encode(state))
}

pub fn read_from<R: Read>(basis: &SpectralBasis, mut r: R) -> Result<DensityField> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Config(format!("reading snapshot: {e}")))?;
    decode(basis, &bytes)
}
