//! Iterative radix-2 decimation-in-time FFT for real input frames.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::NumericsError;

/// Precomputed twiddles and bit-reversal permutation for one transform length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(len: usize) -> Result<Self, NumericsError> {
        if len == 0 || !len.is_power_of_two() {
            return Err(NumericsError::InvalidLength { len, reason: "FFT length must be a power of two" });
        }
        let twiddles = (0..len / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / len as f64))
            .collect();
        let bits = len.trailing_zeros();
        let bitrev = (0..len)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Ok(Self { len, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.len;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let step = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * step];
                    let w = if inverse { w.conj() } else { w };
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }

    /// Spectrum bins `0..=len/2` of a real frame.
    pub fn forward_real(&self, frame: &[f64]) -> Result<Vec<Complex64>, NumericsError> {
        if frame.len() != self.len {
            return Err(NumericsError::InvalidLength { len: frame.len(), reason: "frame length differs from plan" });
        }
        let mut buf: Vec<Complex64> = frame.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        buf.truncate(self.len / 2 + 1);
        Ok(buf)
    }

    /// Inverts [`FftPlan::forward_real`] using Hermitian symmetry.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Result<Vec<f64>, NumericsError> {
        let n = self.len;
        if spectrum.len() != n / 2 + 1 {
            return Err(NumericsError::InvalidLength { len: spectrum.len(), reason: "spectrum must hold len/2+1 bins" });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..spectrum.len()].copy_from_slice(spectrum);
        for k in 1..n.div_ceil(2) {
            buf[n - k] = spectrum[k].conj();
        }
        self.transform(&mut buf, true);
        Ok(buf.into_iter().map(|c| c.re / n as f64).collect())
    }
}

/// One-shot real FFT. Returns `len/2 + 1` bins.
pub fn fft_real(frame: &[f64]) -> Result<Vec<Complex64>, NumericsError> {
    FftPlan::new(frame.len())?.forward_real(frame)
}

/// Inverse of [`fft_real`] for a frame of length `len`.
pub fn ifft_real(spectrum: &[Complex64], len: usize) -> Result<Vec<f64>, NumericsError> {
    FftPlan::new(len)?.inverse_real(spectrum)
}
