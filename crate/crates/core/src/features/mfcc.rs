//! Mel-frequency cepstral coefficients.

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::numerics::{Dct2, FftPlan};

/// Hz to mel: `2595 * log10(1 + f / 700)`.
pub fn mel_scale(f: f64) -> Result<f64, FeatureError> {
    if !(f >= 0.0) || !f.is_finite() {
        return Err(FeatureError::InvalidFrequency(f));
    }
    Ok(2595.0 * (1.0 + f / 700.0).log10())
}

/// Inverse of [`mel_scale`].
pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hamming,
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        use std::f64::consts::PI;
        let denom = (len.max(2) - 1) as f64;
        (0..len)
            .map(|n| match self {
                WindowKind::Hamming => 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos(),
                WindowKind::Hann => 0.5 - 0.5 * (2.0 * PI * n as f64 / denom).cos(),
                WindowKind::Rectangular => 1.0,
            })
            .collect()
    }
}

/// One triangular filter stored as its first non-zero bin plus weights.
#[derive(Debug, Clone)]
struct Triangle {
    start: usize,
    weights: Vec<f64>,
}

/// Triangular filters spaced uniformly in mel between 0 Hz and Nyquist,
/// evaluated at the exact bin centre frequencies.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    filters: Vec<Triangle>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, frame_len: usize, sample_rate: u32) -> Result<Self, FeatureError> {
        let nyquist = f64::from(sample_rate) / 2.0;
        let top = mel_scale(nyquist)?;
        let edges: Vec<f64> = (0..n_filters + 2).map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64)).collect();
        let n_bins = frame_len / 2 + 1;
        let bin_hz = f64::from(sample_rate) / frame_len as f64;
        let filters = edges
            .windows(3)
            .map(|e| {
                let (lo, centre, hi) = (e[0], e[1], e[2]);
                let weights: Vec<(usize, f64)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > lo && f <= centre {
                            (f - lo) / (centre - lo)
                        } else if f > centre && f < hi {
                            (hi - f) / (hi - centre)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                Triangle { start: weights.first().map_or(0, |w| w.0), weights: weights.iter().map(|w| w.1).collect() }
            })
            .collect();
        Ok(Self { filters })
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|t| t.weights.iter().zip(&power[t.start..]).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Reusable MFCC pipeline for one frame length and sample rate:
/// window, power spectrum, mel filterbank, floored natural log, DCT-II.
#[derive(Debug, Clone)]
pub struct MfccExtractor {
    frame_len: usize,
    n_mfcc: usize,
    pre_emphasis: f64,
    log_floor: f64,
    window: Vec<f64>,
    fft: FftPlan,
    bank: MelFilterbank,
    dct: Dct2,
}

impl MfccExtractor {
    pub fn new(
        frame_len: usize,
        n_mfcc: usize,
        n_filters: usize,
        sample_rate: u32,
        window: WindowKind,
        pre_emphasis: f64,
        log_floor: f64,
    ) -> Result<Self, FeatureError> {
        if n_filters < n_mfcc {
            return Err(FeatureError::InvalidConfig(format!("{n_filters} mel filters cannot yield {n_mfcc} coefficients")));
        }
        Ok(Self {
            frame_len,
            n_mfcc,
            pre_emphasis,
            log_floor,
            window: window.coefficients(frame_len),
            fft: FftPlan::new(frame_len)?,
            bank: MelFilterbank::new(n_filters, frame_len, sample_rate)?,
            dct: Dct2::new(n_filters, n_mfcc)?,
        })
    }

    pub fn n_mfcc(&self) -> usize {
        self.n_mfcc
    }

    pub fn compute(&self, frame: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if frame.len() != self.frame_len {
            return Err(FeatureError::InvalidConfig(format!("frame of {} samples, extractor expects {}", frame.len(), self.frame_len)));
        }
        let windowed: Vec<f64> = (0..frame.len())
            .map(|n| {
                let x = if n > 0 { frame[n] - self.pre_emphasis * frame[n - 1] } else { frame[0] };
                x * self.window[n]
            })
            .collect();
        let power: Vec<f64> = self.fft.forward_real(&windowed)?.iter().map(|c| c.norm_sqr()).collect();
        let log_energies: Vec<f64> = self.bank.apply(&power).into_iter().map(|e| e.max(self.log_floor).ln()).collect();
        Ok(self.dct.apply(&log_energies)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_reference_points() {
        assert_eq!(mel_scale(0.0).unwrap(), 0.0);
        assert!((mel_scale(700.0).unwrap() - 2595.0 * 2f64.log10()).abs() < 1e-9);
        assert!((mel_scale(700.0).unwrap() - 781.17).abs() < 0.01);
        assert!((mel_scale(22_050.0).unwrap() - 3923.33).abs() < 0.02);
        assert!(matches!(mel_scale(-1.0), Err(FeatureError::InvalidFrequency(_))));
        assert!((mel_to_hz(mel_scale(1234.5).unwrap()) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn zero_frame_gives_floor_constant() {
        let ex = MfccExtractor::new(512, 13, 26, 44_100, WindowKind::Hamming, 0.0, 1e-10).unwrap();
        let c = ex.compute(&[0.0; 512]).unwrap();
        assert!((c[0] - 1e-10f64.ln() * 26f64.sqrt()).abs() < 1e-9);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn triangles_peak_at_one_and_cover_band() {
        let bank = MelFilterbank::new(26, 1024, 44_100).unwrap();
        assert_eq!(bank.len(), 26);
        let flat = vec![1.0; 513];
        assert!(bank.apply(&flat).iter().all(|&e| e > 0.0));
    }
}
