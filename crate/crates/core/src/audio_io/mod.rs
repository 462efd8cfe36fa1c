//! Audio ingestion: RIFF/WAVE decoding into [`AudioClip`]s and CSV manifests
//! mapping patients to recordings.

mod manifest;
mod wav;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{load_manifest, parse_manifest, PatientMetadata, PatientRecord};
pub use wav::{decode_wav, encode_wav_f32, encode_wav_pcm16, read_wav, write_wav_pcm16, WavData};

/// Nominal recording rate; other rates are accepted but logged.
pub const EXPECTED_SAMPLE_RATE: u32 = 44_100;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
    Healthy,
    Unlabeled,
}

impl Label {
    /// Parses `positive`, `negative` or `healthy` in any letter case.
    pub fn parse(token: &str) -> Option<Label> {
        match token.trim().to_ascii_lowercase().as_str() {
            "positive" => Some(Label::Positive),
            "negative" => Some(Label::Negative),
            "healthy" => Some(Label::Healthy),
            _ => None,
        }
    }

    /// Binary target: COVID-19 positive vs. everything else.
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
            Label::Healthy => "healthy",
            Label::Unlabeled => "unlabeled",
        })
    }
}

/// A mono recording with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub patient_id: String,
    pub cough_id: String,
    pub label: Label,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self { samples, sample_rate_hz, patient_id: String::new(), cough_id: String::new(), label: Label::Unlabeled }
    }

    pub fn with_provenance(mut self, patient_id: impl Into<String>, cough_id: impl Into<String>, label: Label) -> Self {
        self.patient_id = patient_id.into();
        self.cough_id = cough_id.into();
        self.label = label;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
