//! Dense symmetric positive definite solves and matrix files.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `V c = b` by Cholesky factorization with one step of iterative
/// refinement.
pub fn solve(v: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if v.nrows() != v.ncols() || v.nrows() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "matrix {}x{} with right-hand side of length {}",
            v.nrows(),
            v.ncols(),
            b.len()
        )));
    }
    let chol = v.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let mut c = chol.solve(b);
    let r = b - v * &c;
    c += chol.solve(&r);
    let res = (b - v * &c).norm();
    let scale = b.norm().max(f64::MIN_POSITIVE);
    if res > 1e-10 * scale {
        log::warn!("relative residual {:.3e} after refinement", res / scale);
    }
    Ok(c)
}

/// Writes the matrix as a little-endian `u64` dimension followed by the
/// entries in row-major order as `f64`.
pub fn write_matrix(path: &Path, v: &DMatrix<f64>) -> Result<()> {
    let n = v.nrows();
    let mut bytes = Vec::with_capacity(8 + 8 * n * n);
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..n {
        for j in 0..v.ncols() {
            bytes.extend_from_slice(&v[(i, j)].to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

/// Reads a square matrix written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let word = |k: usize| -> [u8; 8] { bytes[8 * k..8 * k + 8].try_into().expect("8 bytes") };
    if bytes.len() < 8 {
        return Err(Error::InvalidArgument("matrix file too short".into()));
    }
    let n = u64::from_le_bytes(word(0)) as usize;
    if bytes.len() != 8 + 8 * n * n {
        return Err(Error::InvalidArgument("matrix file size does not match its header".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| f64::from_le_bytes(word(1 + i * n + j))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let v = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let c = solve(&v, &DVector::from_vec(vec![3.0, 3.0])).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15 && (c[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(solve(&v, &DVector::from_vec(vec![1.0, 1.0])), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn matrix_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        let v = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).transpose() * 0.5;
        let v = &v * v.transpose();
        write_matrix(&path, &v).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 + 8 * 9);
        assert_eq!(read_matrix(&path).unwrap(), v);
    }
}
