//! Binary matrix fixtures: `u32` rows, `u32` cols, then `rows * cols` `f32`
//! values in row-major order, all little-endian.

use std::path::Path;

use ndarray::Array2;

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_matrix(m: &Array2<f64>) -> Vec<u8> {
    let (r, c) = m.dim();
    let mut out = Vec::with_capacity(8 + r * c * 4);
    out.extend_from_slice(&(r as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn read_matrix(bytes: &[u8]) -> Result<Array2<f64>, FixtureError> {
    if bytes.len() < 8 {
        return Err(FixtureError::Truncated { expected: 8, got: bytes.len() });
    }
    let r = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let c = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let expected = r.saturating_mul(c).saturating_mul(4).saturating_add(8);
    if bytes.len() != expected {
        return Err(FixtureError::Truncated { expected, got: bytes.len() });
    }
    let values = bytes[8..]
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
        .collect();
    Ok(Array2::from_shape_vec((r, c), values).expect("length checked"))
}

pub fn write_matrix_file(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<(), FixtureError> {
    std::fs::write(path, write_matrix(m))?;
    Ok(())
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<Array2<f64>, FixtureError> {
    read_matrix(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_f32_precision() {
        let m = Array2::from_shape_fn((3, 2), |(i, j)| i as f64 * 0.5 - j as f64 * 0.25);
        let bytes = write_matrix(&m);
        assert_eq!(bytes.len(), 8 + 24);
        assert_eq!(&bytes[..8], &[3, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(read_matrix(&bytes).unwrap(), m);
        assert!(read_matrix(&bytes[..10]).is_err());
    }
}
