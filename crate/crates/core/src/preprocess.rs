//! Peak normalization and energy-based silence removal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::AudioClip;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("clip '{0}' is silent after trimming")]
    EmptyAfterTrim(String),
    #[error("invalid trim setting: {0}")]
    InvalidConfig(String),
}

/// Output of [`normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub clip: AudioClip,
    /// Set when the input was all zeros and could not be scaled.
    pub silent: bool,
}

/// Scales the clip so that its peak absolute amplitude is exactly 1.
pub fn normalize(clip: &AudioClip) -> Normalized {
    let peak = clip.peak();
    if peak == 0.0 {
        return Normalized { clip: clip.clone(), silent: true };
    }
    let mut out = clip.clone();
    for s in &mut out.samples {
        *s /= peak;
    }
    Normalized { clip: out, silent: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrimConfig {
    /// Audio kept on each side of every active region.
    pub margin_ms: f64,
    /// Energy detector window.
    pub window_ms: f64,
    /// Windows whose RMS is this far below the loudest window are silent.
    pub threshold_db: f64,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self { margin_ms: 50.0, window_ms: 10.0, threshold_db: -40.0 }
    }
}

impl TrimConfig {
    fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.margin_ms >= 0.0 && self.margin_ms.is_finite()) {
            return Err(PreprocessError::InvalidConfig(format!("margin_ms = {}", self.margin_ms)));
        }
        if !(self.window_ms > 0.0 && self.window_ms.is_finite()) {
            return Err(PreprocessError::InvalidConfig(format!("window_ms = {}", self.window_ms)));
        }
        if !(self.threshold_db <= 0.0) {
            return Err(PreprocessError::InvalidConfig(format!("threshold_db = {}", self.threshold_db)));
        }
        Ok(())
    }
}

fn ms_to_samples(ms: f64, rate: u32) -> usize {
    (ms * f64::from(rate) / 1000.0).round() as usize
}

/// Per-sample activity mask from the windowed energy detector.
fn activity_mask(samples: &[f64], window: usize, margin: usize, threshold_db: f64) -> Vec<bool> {
    let rms: Vec<f64> = samples
        .chunks(window)
        .map(|w| (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt())
        .collect();
    let peak = rms.iter().copied().fold(0.0, f64::max);
    let mut mask = vec![false; samples.len()];
    if peak == 0.0 {
        return mask;
    }
    let floor = peak * 10f64.powf(threshold_db / 20.0);
    let n = samples.len();
    for (i, &r) in rms.iter().enumerate() {
        if r >= floor {
            let lo = (i * window).saturating_sub(margin);
            let hi = ((i + 1) * window + margin).min(n);
            mask[lo..hi].iter_mut().for_each(|m| *m = true);
        }
    }
    mask
}

/// Deletes silent stretches, keeping `margin_ms` of context around every active
/// region. Kept samples are copied verbatim and in order.
pub fn trim_silence(clip: &AudioClip, config: &TrimConfig) -> Result<AudioClip, PreprocessError> {
    config.validate()?;
    let window = ms_to_samples(config.window_ms, clip.sample_rate_hz).max(1);
    let margin = ms_to_samples(config.margin_ms, clip.sample_rate_hz);
    let mask = activity_mask(&clip.samples, window, margin, config.threshold_db);
    let kept: Vec<f64> = clip.samples.iter().zip(&mask).filter(|(_, &m)| m).map(|(&s, _)| s).collect();
    if kept.is_empty() {
        return Err(PreprocessError::EmptyAfterTrim(clip.cough_id.clone()));
    }
    Ok(AudioClip { samples: kept, ..clip.clone() })
}

/// Normalization followed by silence trimming.
pub fn preprocess(clip: &AudioClip, config: &TrimConfig) -> Result<AudioClip, PreprocessError> {
    let n = normalize(clip);
    if n.silent {
        return Err(PreprocessError::EmptyAfterTrim(clip.cough_id.clone()));
    }
    trim_silence(&n.clip, config)
}
