//! Framing, per-frame time-domain statistics, delta regression and segment
//! pooling.

use super::FeatureError;
use crate::numerics::{moments, Matrix};

/// Splits `samples` into frames of `frame_len` at stride `hop`. A trailing
/// partial frame is zero-padded.
pub fn frame_signal(samples: &[f64], frame_len: usize, hop: usize) -> Result<Vec<Vec<f64>>, FeatureError> {
    if frame_len == 0 || hop == 0 {
        return Err(FeatureError::InvalidConfig("frame and hop lengths must be positive".into()));
    }
    if samples.len() < frame_len {
        return Err(FeatureError::TooShort { len: samples.len(), frame_len });
    }
    let count = 1 + (samples.len() - frame_len).div_ceil(hop);
    Ok((0..count)
        .map(|i| {
            let start = i * hop;
            let end = (start + frame_len).min(samples.len());
            let mut f = samples[start..end].to_vec();
            f.resize(frame_len, 0.0);
            f
        })
        .collect())
}

/// Time-domain statistics of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStats {
    /// `log10(0.001 + mean(s^2))`
    pub log_energy: f64,
    /// Fraction of adjacent sample pairs with strictly opposite signs.
    pub zcr: f64,
    /// Population kurtosis, 0 for a constant frame.
    pub kurtosis: f64,
}

pub fn frame_aux_features(frame: &[f64]) -> Result<FrameStats, FeatureError> {
    let m = moments(frame)?;
    let energy = frame.iter().map(|v| v * v).sum::<f64>() / frame.len() as f64;
    let zcr = if frame.len() > 1 {
        frame.windows(2).filter(|w| w[0] * w[1] < 0.0).count() as f64 / (frame.len() - 1) as f64
    } else {
        0.0
    };
    Ok(FrameStats { log_energy: (0.001 + energy).log10(), zcr, kurtosis: m.kurtosis() })
}

const DELTA_HALF_WINDOW: usize = 2;

fn regression_delta(m: &Matrix) -> Matrix {
    let (t_len, cols) = m.shape();
    let denom: f64 = 2.0 * (1..=DELTA_HALF_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Matrix::zeros(t_len, cols);
    for t in 0..t_len {
        for n in 1..=DELTA_HALF_WINDOW {
            let ahead = m.row((t + n).min(t_len - 1));
            let behind = m.row(t.saturating_sub(n));
            let w = n as f64 / denom;
            for (o, (a, b)) in out.row_mut(t).iter_mut().zip(ahead.iter().zip(behind)) {
                *o += w * (a - b);
            }
        }
    }
    out
}

/// Appends velocity and acceleration (regression deltas with half-window 2
/// and edge replication) to a `T x n` coefficient track: `[static | vel | acc]`.
pub fn add_deltas(per_frame: &Matrix) -> Matrix {
    let vel = regression_delta(per_frame);
    let acc = regression_delta(&vel);
    let (t_len, n) = per_frame.shape();
    let mut out = Matrix::zeros(t_len, 3 * n);
    for t in 0..t_len {
        let row = out.row_mut(t);
        row[..n].copy_from_slice(per_frame.row(t));
        row[n..2 * n].copy_from_slice(vel.row(t));
        row[2 * n..].copy_from_slice(acc.row(t));
    }
    out
}

/// Sizes of the contiguous frame groups used when `frames >= segments`:
/// near-equal, larger groups first.
pub fn segment_sizes(frames: usize, segments: usize) -> Vec<usize> {
    let base = frames / segments;
    let extra = frames % segments;
    (0..segments).map(|s| base + usize::from(s < extra)).collect()
}

/// Averages per-frame rows into `n_segments` rows. With fewer frames than
/// segments, segment `s` takes frame `s mod T`.
pub fn pool_segments(per_frame: &Matrix, n_segments: usize) -> Result<Matrix, FeatureError> {
    let (t_len, dims) = per_frame.shape();
    if t_len == 0 {
        return Err(FeatureError::EmptyInput);
    }
    if n_segments == 0 {
        return Err(FeatureError::InvalidConfig("n_segments must be at least 1".into()));
    }
    let mut out = Matrix::zeros(n_segments, dims);
    if t_len < n_segments {
        for s in 0..n_segments {
            out.row_mut(s).copy_from_slice(per_frame.row(s % t_len));
        }
        return Ok(out);
    }
    let mut start = 0;
    for (s, size) in segment_sizes(t_len, n_segments).into_iter().enumerate() {
        let row = out.row_mut(s);
        for t in start..start + size {
            for (o, v) in row.iter_mut().zip(per_frame.row(t)) {
                *o += v;
            }
        }
        row.iter_mut().for_each(|o| *o /= size as f64);
        start += size;
    }
    Ok(out)
}
