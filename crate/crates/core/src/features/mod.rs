//! Per-cough feature matrices.
//!
//! A clip is cut into frames; each frame yields MFCCs (optionally with
//! velocity and acceleration), log energy, zero-crossing rate and kurtosis.
//! Frames are then averaged into a fixed number of contiguous segments, so
//! every cough becomes an `n_segments x D` matrix regardless of its length.

mod cache;
mod frames;
mod mfcc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio_io::{AudioClip, Label};
use crate::numerics::{Matrix, NumericsError};

pub use cache::{read_cached, write_cached, CACHE_FORMAT_VERSION};
pub use frames::{add_deltas, frame_aux_features, frame_signal, pool_segments, segment_sizes, FrameStats};
pub use mfcc::{mel_scale, mel_to_hz, MelFilterbank, MfccExtractor, WindowKind};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip of {len} samples is shorter than one {frame_len}-sample frame")]
    TooShort { len: usize, frame_len: usize },
    #[error("negative or non-finite frequency {0}")]
    InvalidFrequency(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("feature cache {path}: {reason}")]
    Cache { path: String, reason: String },
}

/// Feature extraction hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub n_mfcc: usize,
    pub frame_len: usize,
    pub n_segments: usize,
    /// Frame stride; `None` means non-overlapping frames.
    pub hop_len: Option<usize>,
    /// `None` means `2 * n_mfcc`.
    pub n_mel_filters: Option<usize>,
    pub include_deltas: bool,
    pub include_log_energy: bool,
    pub include_zcr: bool,
    pub include_kurtosis: bool,
    pub window: WindowKind,
    /// First-order pre-emphasis coefficient for the MFCC path; 0 disables it.
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_mfcc: 13,
            frame_len: 1024,
            n_segments: 50,
            hop_len: None,
            n_mel_filters: None,
            include_deltas: true,
            include_log_energy: true,
            include_zcr: true,
            include_kurtosis: true,
            window: WindowKind::Hamming,
            pre_emphasis: 0.0,
            log_floor: 1e-10,
        }
    }
}

/// Searchable values for the MFCC count, frame length and segment count.
pub const MFCC_GRID: [usize; 5] = [13, 26, 39, 52, 65];
pub const FRAME_GRID: [usize; 5] = [256, 512, 1024, 2048, 4096];
pub const SEGMENT_GRID: [usize; 5] = [50, 70, 100, 120, 150];

impl FeatureConfig {
    pub fn new(n_mfcc: usize, frame_len: usize, n_segments: usize) -> Self {
        Self { n_mfcc, frame_len, n_segments, ..Self::default() }
    }

    /// All 125 combinations of [`MFCC_GRID`], [`FRAME_GRID`] and [`SEGMENT_GRID`].
    pub fn full_grid() -> Vec<FeatureConfig> {
        let mut out = Vec::with_capacity(125);
        for &m in &MFCC_GRID {
            for &f in &FRAME_GRID {
                for &s in &SEGMENT_GRID {
                    out.push(Self::new(m, f, s));
                }
            }
        }
        out
    }

    pub fn hop(&self) -> usize {
        self.hop_len.unwrap_or(self.frame_len)
    }

    pub fn mel_filters(&self) -> usize {
        self.n_mel_filters.unwrap_or(2 * self.n_mfcc)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: String| Err(FeatureError::InvalidConfig(m));
        if self.n_mfcc == 0 {
            return bad("n_mfcc must be positive".into());
        }
        if !self.frame_len.is_power_of_two() || self.frame_len < 2 {
            return bad(format!("frame_len {} is not a power of two", self.frame_len));
        }
        if self.n_segments == 0 {
            return bad("n_segments must be at least 1".into());
        }
        if self.hop() == 0 {
            return bad("hop_len must be positive".into());
        }
        if self.mel_filters() < self.n_mfcc {
            return bad(format!("n_mel_filters {} < n_mfcc {}", self.mel_filters(), self.n_mfcc));
        }
        if !(self.log_floor > 0.0) {
            return bad(format!("log_floor {} must be positive", self.log_floor));
        }
        Ok(())
    }

    /// Number of feature dimensions per segment.
    pub fn dims(&self) -> usize {
        self.n_mfcc * if self.include_deltas { 3 } else { 1 }
            + usize::from(self.include_log_energy)
            + usize::from(self.include_zcr)
            + usize::from(self.include_kurtosis)
    }

    pub fn dim_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_mfcc).map(|i| format!("mfcc_{i}")).collect();
        if self.include_deltas {
            names.extend((0..self.n_mfcc).map(|i| format!("mfcc_vel_{i}")));
            names.extend((0..self.n_mfcc).map(|i| format!("mfcc_acc_{i}")));
        }
        if self.include_log_energy {
            names.push("log_energy".into());
        }
        if self.include_zcr {
            names.push("zcr".into());
        }
        if self.include_kurtosis {
            names.push("kurtosis".into());
        }
        names
    }

    /// Short stable fingerprint used to key cached features.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    /// Compact `MFCC=13, Frame=1024, Seg=50` description.
    pub fn label(&self) -> String {
        format!("MFCC={}, Frame={}, Seg={}", self.n_mfcc, self.frame_len, self.n_segments)
    }
}

/// One cough's pooled features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Matrix,
    pub dim_names: Vec<String>,
    pub patient_id: String,
    pub cough_id: String,
    pub label: Label,
}

impl FeatureMatrix {
    pub fn segments(&self) -> usize {
        self.values.rows()
    }

    pub fn dims(&self) -> usize {
        self.values.cols()
    }
}

/// Extracts [`FeatureMatrix`] values for one configuration and sample rate.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    sample_rate: u32,
    mfcc: MfccExtractor,
}

impl FeatureExtractor {
    pub fn new(config: &FeatureConfig, sample_rate: u32) -> Result<Self, FeatureError> {
        config.validate()?;
        let mfcc = MfccExtractor::new(
            config.frame_len,
            config.n_mfcc,
            config.mel_filters(),
            sample_rate,
            config.window,
            config.pre_emphasis,
            config.log_floor,
        )?;
        Ok(Self { config: config.clone(), sample_rate, mfcc })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Unpooled `T x D` features, one row per frame.
    pub fn per_frame(&self, samples: &[f64]) -> Result<Matrix, FeatureError> {
        let cfg = &self.config;
        let frames = frame_signal(samples, cfg.frame_len, cfg.hop())?;
        let mut coeffs = Vec::with_capacity(frames.len() * cfg.n_mfcc);
        for f in &frames {
            coeffs.extend(self.mfcc.compute(f)?);
        }
        let coeffs = Matrix::from_vec(frames.len(), cfg.n_mfcc, coeffs)?;
        let cepstral = if cfg.include_deltas { add_deltas(&coeffs) } else { coeffs };
        let mut rows = Vec::with_capacity(frames.len());
        for (t, f) in frames.iter().enumerate() {
            let mut row = cepstral.row(t).to_vec();
            let stats = frame_aux_features(f)?;
            if cfg.include_log_energy {
                row.push(stats.log_energy);
            }
            if cfg.include_zcr {
                row.push(stats.zcr);
            }
            if cfg.include_kurtosis {
                row.push(stats.kurtosis);
            }
            rows.push(row);
        }
        Ok(Matrix::from_rows(&rows)?)
    }

    /// Full extraction. Clips shorter than one frame are zero-padded to a
    /// single frame.
    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureMatrix, FeatureError> {
        if clip.is_empty() {
            return Err(FeatureError::EmptyInput);
        }
        let padded;
        let samples = if clip.len() < self.config.frame_len {
            padded = {
                let mut p = clip.samples.clone();
                p.resize(self.config.frame_len, 0.0);
                p
            };
            &padded
        } else {
            &clip.samples
        };
        let pooled = pool_segments(&self.per_frame(samples)?, self.config.n_segments)?;
        if !pooled.is_finite() {
            return Err(FeatureError::InvalidConfig(format!("non-finite features for {}", clip.cough_id)));
        }
        Ok(FeatureMatrix {
            values: pooled,
            dim_names: self.config.dim_names(),
            patient_id: clip.patient_id.clone(),
            cough_id: clip.cough_id.clone(),
            label: clip.label,
        })
    }
}

/// One-shot extraction using the clip's own sample rate.
pub fn extract(clip: &AudioClip, config: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    FeatureExtractor::new(config, clip.sample_rate_hz)?.extract(clip)
}
