//! Synthetic two-class cough-like corpus and the end-to-end demo run on it.
//!
//! Class A (negative) recordings contain band-limited noise bursts centred at
//! 400 Hz, class B (positive) at 1200 Hz, over a white-noise floor.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::audio_io::{load_manifest, write_wav_pcm16, AudioError};
use crate::crossval::{make_fold_plan, run_nested_cv, AudioCorpus, CrossvalError, CvConfig, CvResult, FeatureStore, SearchGrid, DEFAULT_INNER_SPLITS};
use crate::evaluation::{roc_auc, RocCurve, ScoreFunction};
use crate::features::FeatureConfig;
use crate::models::{LrParams, ModelSpec};
use crate::numerics::{derive_seed, Rng};
use crate::preprocess::TrimConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub patients_per_class: usize,
    pub sample_rate: u32,
    pub negative_center_hz: f64,
    pub positive_center_hz: f64,
    pub bandwidth_hz: f64,
    /// Burst power over noise-floor power.
    pub snr_db: f64,
    pub min_bursts: usize,
    pub max_bursts: usize,
    pub max_recordings: usize,
    pub burst_secs: (f64, f64),
    pub gap_secs: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            patients_per_class: 30,
            sample_rate: 44_100,
            negative_center_hz: 400.0,
            positive_center_hz: 1200.0,
            bandwidth_hz: 200.0,
            snr_db: 10.0,
            min_bursts: 2,
            max_bursts: 4,
            max_recordings: 2,
            burst_secs: (0.2, 0.4),
            gap_secs: (0.15, 0.4),
        }
    }
}

/// White noise through two cascaded band-pass biquads (constant 0 dB peak
/// gain), scaled to unit RMS.
pub fn band_noise(n: usize, center_hz: f64, bandwidth_hz: f64, sample_rate: u32, rng: &mut Rng) -> Vec<f64> {
    let w0 = 2.0 * PI * center_hz / f64::from(sample_rate);
    let alpha = w0.sin() * bandwidth_hz / (2.0 * center_hz);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    // [x1, x2, y1, y2] per section
    let mut state = [[0.0f64; 4]; 2];
    // run the filter in before keeping output
    let warmup = 4096;
    let mut out = Vec::with_capacity(n);
    for i in 0..n + warmup {
        let mut x = rng.standard_normal();
        for st in &mut state {
            let y = b0 * x + b2 * st[1] - a1 * st[2] - a2 * st[3];
            *st = [x, st[0], y, st[2]];
            x = y;
        }
        if i >= warmup {
            out.push(x);
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// One recording: silence-separated bursts over a noise floor, peak 0.9.
pub fn synth_recording(center_hz: f64, n_bursts: usize, cfg: &SynthConfig, rng: &mut Rng) -> Vec<f64> {
    let sr = f64::from(cfg.sample_rate);
    let secs = |rng: &mut Rng, (lo, hi): (f64, f64)| (rng.uniform_range(lo, hi) * sr) as usize;
    let mut signal = vec![0.0; secs(rng, cfg.gap_secs)];
    for _ in 0..n_bursts {
        let len = secs(rng, cfg.burst_secs);
        let burst = band_noise(len, center_hz, cfg.bandwidth_hz, cfg.sample_rate, rng);
        // 10 ms raised-cosine fades
        let fade = ((0.01 * sr) as usize).min(len / 2);
        signal.extend(burst.iter().enumerate().map(|(i, v)| {
            let edge = i.min(len - 1 - i);
            if edge < fade {
                v * 0.5 * (1.0 - (PI * edge as f64 / fade as f64).cos())
            } else {
                *v
            }
        }));
        signal.extend(std::iter::repeat_n(0.0, secs(rng, cfg.gap_secs)));
    }
    let floor = 10f64.powf(-cfg.snr_db / 20.0);
    signal.iter_mut().for_each(|v| *v += floor * rng.standard_normal());
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    signal.iter_mut().for_each(|v| *v *= 0.9 / peak);
    signal
}

/// Writes the corpus (`wav/*.wav` plus `manifest.csv`) under `dir` and
/// returns the manifest path.
pub fn generate_corpus(dir: &Path, cfg: &SynthConfig, seed: u64) -> Result<PathBuf, AudioError> {
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|source| AudioError::Io { path: wav_dir.clone(), source })?;
    let mut manifest = String::from("patient_id,cough_path,label\n");
    for i in 0..2 * cfg.patients_per_class {
        let positive = i % 2 == 1;
        let center = if positive { cfg.positive_center_hz } else { cfg.negative_center_hz };
        let mut rng = Rng::new(derive_seed(seed, &[i as u64]));
        let id = format!("syn{i:03}");
        for r in 0..1 + rng.below(cfg.max_recordings) {
            let n_bursts = cfg.min_bursts + rng.below(cfg.max_bursts - cfg.min_bursts + 1);
            let samples = synth_recording(center, n_bursts, cfg, &mut rng);
            let name = format!("{id}_{r}.wav");
            write_wav_pcm16(wav_dir.join(&name), &samples, cfg.sample_rate)?;
            writeln!(manifest, "{id},wav/{name},{}", if positive { "positive" } else { "negative" }).unwrap();
        }
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(|source| AudioError::Io { path: path.clone(), source })?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub manifest: PathBuf,
    pub cv: CvResult,
    /// Pooled ROC over every outer test patient, each scored with its fold's
    /// chosen index.
    pub pooled_roc: RocCurve,
}

/// The feature configuration, model grid and fold sizes used by the demo.
pub fn demo_setup() -> (SearchGrid, usize, usize) {
    let models = [0.1, 1.0].iter().map(|&strength| ModelSpec::LR(LrParams { strength, epochs: 20, ..Default::default() })).collect();
    let grid = SearchGrid { features: vec![FeatureConfig::new(13, 1024, 50)], models, score_functions: ScoreFunction::ALL.to_vec() };
    (grid, 12, 10)
}

/// Generates the corpus under `dir` and runs preprocessing, feature
/// extraction, SMOTE, LR and nested cross-validation on it.
pub fn run_synth_demo(dir: &Path, seed: u64, workers: Option<usize>) -> Result<DemoOutcome, CrossvalError> {
    let manifest = generate_corpus(dir, &SynthConfig::default(), seed)?;
    let records = load_manifest(&manifest)?;
    let corpus = AudioCorpus::load(&records, &TrimConfig::default())?;
    let (grid, j, k) = demo_setup();
    let store = FeatureStore::from_corpus(&corpus, &grid.features, None)?;
    let labels = store.get(&grid.features[0])?.labels();
    let plan = make_fold_plan(&labels, j, k, DEFAULT_INNER_SPLITS, seed)?;
    let cv = run_nested_cv(&store, &grid, &plan, &CvConfig { seed, workers, ..Default::default() })?;
    let pooled: Vec<(f64, bool)> = cv
        .folds
        .iter()
        .flat_map(|f| f.report.patients.iter().map(|p| (p.index(f.chosen.score_function), p.positive)))
        .collect();
    let pooled_roc = roc_auc(&pooled)?;
    info!("synthetic demo: mean outer AUC {:.4}, pooled AUC {:.4}", cv.summary.mean_auc, pooled_roc.auc);
    Ok(DemoOutcome { manifest, cv, pooled_roc })
}
