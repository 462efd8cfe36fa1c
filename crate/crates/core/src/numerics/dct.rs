//! Orthonormal DCT-II and its inverse (DCT-III).

use std::f64::consts::PI;

use super::NumericsError;

/// Cosine table for an orthonormal DCT-II of fixed input length.
#[derive(Debug, Clone)]
pub struct Dct2 {
    len: usize,
    n_out: usize,
    // basis[k * len + n]
    basis: Vec<f64>,
}

impl Dct2 {
    pub fn new(len: usize, n_out: usize) -> Result<Self, NumericsError> {
        if len == 0 {
            return Err(NumericsError::EmptyInput);
        }
        if n_out > len {
            return Err(NumericsError::InvalidLength { len: n_out, reason: "n_out exceeds input length" });
        }
        let mut basis = Vec::with_capacity(n_out * len);
        for k in 0..n_out {
            let scale = if k == 0 { (1.0 / len as f64).sqrt() } else { (2.0 / len as f64).sqrt() };
            for n in 0..len {
                basis.push(scale * (PI * k as f64 * (2 * n + 1) as f64 / (2 * len) as f64).cos());
            }
        }
        Ok(Self { len, n_out, basis })
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if values.len() != self.len {
            return Err(NumericsError::InvalidLength { len: values.len(), reason: "input differs from DCT length" });
        }
        Ok(self
            .basis
            .chunks_exact(self.len)
            .take(self.n_out)
            .map(|row| row.iter().zip(values).map(|(b, v)| b * v).sum())
            .collect())
    }
}

/// Orthonormal DCT-II of `values`, keeping the first `n_out` coefficients.
pub fn dct2(values: &[f64], n_out: usize) -> Result<Vec<f64>, NumericsError> {
    Dct2::new(values.len(), n_out)?.apply(values)
}

/// Inverse of a full-length orthonormal DCT-II.
pub fn idct2(coeffs: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let len = coeffs.len();
    if len == 0 {
        return Err(NumericsError::EmptyInput);
    }
    let dct = Dct2::new(len, len)?;
    let mut out = vec![0.0; len];
    for (row, &c) in dct.basis.chunks_exact(len).zip(coeffs) {
        for (o, b) in out.iter_mut().zip(row) {
            *o += b * c;
        }
    }
    Ok(out)
}
