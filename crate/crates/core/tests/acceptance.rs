//! End-to-end acceptance checks, one per criterion. Runs without the libtest
//! harness so that every criterion prints a single PASS/FAIL line.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::ops::ControlFlow;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use coughnet::audio_io::{decode_wav, encode_wav_pcm16, read_wav, write_wav_pcm16, Label};
use coughnet::balance::{smote, synthetic_count, SmoteConfig};
use coughnet::crossval::{make_fold_plan, make_inner_splits, Dataset, PatientFeatures};
use coughnet::evaluation::{eer_threshold, roc_auc};
use coughnet::features::{FeatureConfig, FeatureMatrix, MfccExtractor, WindowKind, FRAME_GRID, MFCC_GRID};
use coughnet::models::nets::Network;
use coughnet::models::{
    fit_with_monitor, gradient_check, load_model, save_model, CnnParams, Family, InputShape, LrParams, LstmParams, MlpParams, ModelSpec, ResNet,
    ResNetParams, ResNetPreset, TrainedModel,
};
use coughnet::numerics::{fft_real, Matrix, Rng};
use coughnet::selection::{sfs, SfsConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 1

/// Full-scale settings must at least be constructible even though training
/// at that scale is out of reach here.
fn full_scale_configuration() -> Outcome {
    let grid = FeatureConfig::full_grid();
    let all_valid = grid.iter().all(|c| c.validate().is_ok());
    let plan = make_fold_plan(&(0..1171).map(|i| (format!("p{i}"), i < 92)).collect::<Vec<_>>(), 234, 187, 4, 0).map_err(|e| e.to_string())?;
    let resnet = ResNet::new(ResNetPreset::Resnet50Audio, 50, 3 * 39 + 3).is_some();
    let grids_in_range = Family::ALL.iter().all(|&f| ModelSpec::published_grid(f).iter().all(ModelSpec::within_published_ranges));
    check(
        grid.len() == 125 && all_valid && plan.n_outer() == 5 && resnet && grids_in_range,
        format!(
            "{} feature configs valid={all_valid}, {} outer folds at N=1171, resnet50 builds={resnet}, model grids in range={grids_in_range}; \
             headline AUCs from the private cohort are documentation targets only",
            grid.len(),
            plan.n_outer()
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn synthetic_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let demo = coughnet::synth::run_synth_demo(dir.path(), 7, None).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let auc = demo.cv.summary.mean_auc;
    check(
        auc >= 0.95 && secs <= 300.0 && demo.cv.folds.len() == 5,
        format!("mean outer-fold AUC {auc:.4} over {} folds (pooled {:.4}) in {secs:.1} s", demo.cv.folds.len(), demo.pooled_roc.auc),
    )
}

// ---------------------------------------------------------------- criterion 3

struct NaiveDft {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl NaiveDft {
    fn new(n: usize) -> Self {
        let ang = |j: usize| 2.0 * PI * j as f64 / n as f64;
        NaiveDft { n, cos: (0..n).map(|j| ang(j).cos()).collect(), sin: (0..n).map(|j| ang(j).sin()).collect() }
    }

    /// Bins `0..=n/2` as (re, im).
    fn forward(&self, x: &[f64]) -> Vec<(f64, f64)> {
        (0..=self.n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let j = (k * t) % self.n;
                    re += v * self.cos[j];
                    im -= v * self.sin[j];
                }
                (re, im)
            })
            .collect()
    }
}

/// Independent MFCC: Hamming window, naive DFT power, triangular mel filters
/// between 0 Hz and Nyquist, natural log floored at 1e-10, orthonormal DCT-II.
fn oracle_mfcc(dft: &NaiveDft, frame: &[f64], n_mfcc: usize, n_filters: usize, rate: f64) -> Vec<f64> {
    let n = frame.len();
    let windowed: Vec<f64> = frame.iter().enumerate().map(|(i, v)| v * (0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())).collect();
    let power: Vec<f64> = dft.forward(&windowed).iter().map(|(re, im)| re * re + im * im).collect();
    let hz_to_mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let mel_to_hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = hz_to_mel(rate / 2.0);
    let edge = |i: usize| mel_to_hz(top * i as f64 / (n_filters + 1) as f64);
    let logs: Vec<f64> = (0..n_filters)
        .map(|m| {
            let (lo, c, hi) = (edge(m), edge(m + 1), edge(m + 2));
            let e: f64 = power
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let f = k as f64 * rate / n as f64;
                    let w = if f > lo && f <= c {
                        (f - lo) / (c - lo)
                    } else if f > c && f < hi {
                        (hi - f) / (hi - c)
                    } else {
                        0.0
                    };
                    w * p
                })
                .sum();
            e.max(1e-10).ln()
        })
        .collect();
    (0..n_mfcc)
        .map(|k| {
            let s = if k == 0 { (1.0 / n_filters as f64).sqrt() } else { (2.0 / n_filters as f64).sqrt() };
            s * logs.iter().enumerate().map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n_filters) as f64).cos()).sum::<f64>()
        })
        .collect()
}

fn random_frame(rng: &mut Rng, n: usize) -> Vec<f64> {
    // noise plus a couple of tones at a random level
    let amp = 10f64.powf(rng.uniform_range(-3.0, 0.0));
    let tones: Vec<(f64, f64)> = (0..2).map(|_| (rng.uniform_range(50.0, 15_000.0), rng.uniform_range(0.0, 2.0 * PI))).collect();
    (0..n)
        .map(|t| {
            let s: f64 = tones.iter().map(|(f, ph)| (2.0 * PI * f * t as f64 / 44_100.0 + ph).sin()).sum();
            amp * (0.3 * rng.standard_normal() + s)
        })
        .collect()
}

fn dsp_oracles() -> Outcome {
    let mut rng = Rng::new(2024);
    // FFT against the naive DFT for every power of two up to 4096
    let mut fft_err = 0.0f64;
    for p in 1..=12 {
        let n = 1usize << p;
        let dft = NaiveDft::new(n);
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let fast = fft_real(&x).map_err(|e| e.to_string())?;
            for (a, (re, im)) in fast.iter().zip(dft.forward(&x)) {
                fft_err = fft_err.max((a.re - re).abs()).max((a.im - im).abs());
            }
        }
    }
    // MFCC: error relative to the largest oracle coefficient of each frame
    let mut mfcc_err = 0.0f64;
    let mut pairs = 0;
    for &frame_len in &FRAME_GRID {
        let dft = NaiveDft::new(frame_len);
        let frames: Vec<Vec<f64>> = (0..50).map(|_| random_frame(&mut rng, frame_len)).collect();
        for &n_mfcc in &MFCC_GRID {
            let ex = MfccExtractor::new(frame_len, n_mfcc, 2 * n_mfcc, 44_100, WindowKind::Hamming, 0.0, 1e-10).map_err(|e| e.to_string())?;
            for f in &frames {
                let got = ex.compute(f).map_err(|e| e.to_string())?;
                let want = oracle_mfcc(&dft, f, n_mfcc, 2 * n_mfcc, 44_100.0);
                let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let err = got.iter().zip(&want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
                mfcc_err = mfcc_err.max(err);
            }
            pairs += 1;
        }
    }
    check(
        fft_err <= 1e-9 && mfcc_err <= 1e-6 && pairs == 25,
        format!("FFT max abs error {fft_err:.2e} (n = 2..4096); MFCC max relative error {mfcc_err:.2e} over {pairs} configs x 50 frames"),
    )
}

// ---------------------------------------------------------------- criterion 4

fn gradient_checks() -> Outcome {
    let cases = [
        (ModelSpec::MLP(MlpParams { hidden_units: 12, l2_penalty: 0.1, ..Default::default() }), InputShape { segments: 1, dims: 10 }),
        (ModelSpec::CNN(CnnParams { filters: 4, kernel_size: 2, dropout: 0.3, ..Default::default() }), InputShape { segments: 8, dims: 8 }),
        (ModelSpec::LSTM(LstmParams { units: 8, dropout: 0.3, ..Default::default() }), InputShape { segments: 5, dims: 4 }),
        (ModelSpec::ResNet(ResNetParams { preset: ResNetPreset::Tiny, ..Default::default() }), InputShape { segments: 8, dims: 8 }),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (spec, shape) in cases {
        let g = gradient_check(&spec, shape, 17).map_err(|e| e.to_string())?;
        ok &= g.checked >= 100 && g.max_relative_error <= 1e-4;
        parts.push(format!("{} {:.1e} ({} params)", spec.family(), g.max_relative_error, g.checked));
    }
    check(ok, format!("max relative error: {}", parts.join(", ")))
}

// ---------------------------------------------------------------- criterion 5

fn segment_residual(s: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let dd: f64 = d.iter().map(|v| v * v).sum();
    let t = if dd == 0.0 { 0.0 } else { (s.iter().zip(a).zip(&d).map(|((s, a), d)| (s - a) * d).sum::<f64>() / dd).clamp(0.0, 1.0) };
    s.iter().zip(a).zip(&d).map(|((s, a), d)| (s - a - t * d).powi(2)).sum::<f64>().sqrt()
}

fn smote_geometry() -> Outcome {
    let mut rng = Rng::new(5);
    let mut worst = 0.0f64;
    let mut total = 0;
    for trial in 0..500 {
        let m = 2 + rng.below(40);
        let dim = 1 + rng.below(10);
        let majority = m + rng.below(200);
        let minority: Vec<Vec<f64>> = (0..m).map(|_| (0..dim).map(|_| rng.uniform_range(-50.0, 50.0)).collect()).collect();
        let cfg = SmoteConfig { n_candidates: 1 + rng.below(8), target_ratio: 1.0, seed: trial };
        let out = smote(&minority, majority, &cfg).map_err(|e| e.to_string())?;
        if m + out.len() != majority {
            return Err(format!("trial {trial}: {m} + {} synthetics != {majority}", out.len()));
        }
        for s in &out {
            if s.parent == s.neighbor || s.parent >= m || s.neighbor >= m {
                return Err(format!("trial {trial}: bad parents {} / {}", s.parent, s.neighbor));
            }
            worst = worst.max(segment_residual(&s.values, &minority[s.parent], &minority[s.neighbor]));
        }
        total += out.len();
    }
    let minority: Vec<Vec<f64>> = (0..92).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let table = smote(&minority, 1079, &SmoteConfig::default()).map_err(|e| e.to_string())?.len();
    check(
        worst <= 1e-9 && table == 987 && synthetic_count(92, 1079, 1.0) == 987,
        format!("{total} synthetics over 500 sets, max segment residual {worst:.1e}; 92 vs 1079 -> {table} synthetics"),
    )
}

// ---------------------------------------------------------------- criterion 6

fn evaluation_oracles() -> Outcome {
    let mut rng = Rng::new(6);
    let mut trials = 0;
    let mut skipped = 0;
    while trials < 1000 {
        let n = 2 + rng.below(49);
        // coarse grid so that ties are common
        let levels = 1 + rng.below(12);
        let data: Vec<(f64, bool)> = (0..n).map(|_| (rng.below(levels) as f64 / 4.0 - 1.0, rng.uniform() < 0.5)).collect();
        let pos: Vec<f64> = data.iter().filter(|d| d.1).map(|d| d.0).collect();
        let neg: Vec<f64> = data.iter().filter(|d| !d.1).map(|d| d.0).collect();
        if pos.is_empty() || neg.is_empty() {
            skipped += 1;
            continue;
        }
        trials += 1;
        let roc = roc_auc(&data).map_err(|e| e.to_string())?;
        let twice: usize = pos.iter().map(|p| neg.iter().map(|q| if p > q { 2 } else if p == q { 1 } else { 0 }).sum::<usize>()).sum();
        let oracle = twice as f64 / (2.0 * pos.len() as f64 * neg.len() as f64);
        if roc.auc != oracle {
            return Err(format!("trial {trials}: auc {} vs pair count {oracle}", roc.auc));
        }
        // exhaustive sweep over every finite cut "score >= t"
        let gap = |t: f64| {
            let fpr = neg.iter().filter(|&&q| q >= t).count() as f64 / neg.len() as f64;
            let fnr = pos.iter().filter(|&&p| p < t).count() as f64 / pos.len() as f64;
            (fpr - fnr).abs()
        };
        let best = data.iter().map(|d| gap(d.0)).fold(f64::INFINITY, f64::min);
        let chosen = eer_threshold(&roc);
        if !chosen.is_finite() || (gap(chosen) - best).abs() > 1e-12 {
            return Err(format!("trial {trials}: EER threshold {chosen} gap {} vs sweep minimum {best}", gap(chosen)));
        }
        // strictly increasing transform
        let moved: Vec<(f64, bool)> = data.iter().map(|&(s, l)| ((3.0 * s).exp() + s * s * s, l)).collect();
        let again = roc_auc(&moved).map_err(|e| e.to_string())?.auc;
        if again != roc.auc {
            return Err(format!("trial {trials}: AUC {} changed to {again} under a monotone transform", roc.auc));
        }
    }
    Ok(format!("{trials} random inputs: AUC equals pair counting exactly, EER at sweep minimum, monotone invariance ({skipped} one-class draws redrawn)"))
}

// ---------------------------------------------------------------- criterion 7

fn fold_hygiene() -> Outcome {
    let mut rng = Rng::new(7);
    for trial in 0..100 {
        let n = 10 + rng.below(400);
        let patients: Vec<(String, bool)> = (0..n).map(|i| (format!("p{i}"), rng.uniform() < 0.3)).collect();
        let j = 1 + rng.below(n / 3);
        let k = 1 + rng.below((n - j - 1).min(n / 3).max(1));
        let plan = make_fold_plan(&patients, j, k, 1 + rng.below(5), trial).map_err(|e| format!("trial {trial}: {e}"))?;
        let all: HashSet<&str> = patients.iter().map(|p| p.0.as_str()).collect();
        let mut seen_test: HashSet<&str> = HashSet::new();
        if plan.n_outer() != n / j {
            return Err(format!("trial {trial}: {} folds for N={n}, J={j}", plan.n_outer()));
        }
        for fold in &plan.outer {
            let test: HashSet<&str> = fold.test.iter().map(String::as_str).collect();
            let train: HashSet<&str> = fold.train.iter().map(String::as_str).collect();
            let ok = test.len() == j && test.is_disjoint(&train) && test.union(&train).count() == n && test.is_subset(&all);
            if !ok || test.iter().any(|t| !seen_test.insert(t)) {
                return Err(format!("trial {trial}: outer fold overlap or gap"));
            }
            for split in &fold.inner {
                let dev: HashSet<&str> = split.dev.iter().map(String::as_str).collect();
                let fit: HashSet<&str> = split.fit.iter().map(String::as_str).collect();
                let ok = dev.is_disjoint(&fit) && dev.is_disjoint(&test) && fit.is_disjoint(&test) && dev.union(&fit).count() == train.len();
                if !ok {
                    return Err(format!("trial {trial}: inner split leaks"));
                }
            }
        }
    }
    let big: Vec<(String, bool)> = (0..1171).map(|i| (format!("p{i}"), i % 13 == 0)).collect();
    let plan = make_fold_plan(&big, 234, 187, 4, 1).map_err(|e| e.to_string())?;
    check(plan.n_outer() == 5, format!("100 random plans disjoint and partitioning; N=1171, J=234 -> {} outer folds", plan.n_outer()))
}

// ---------------------------------------------------------------- criterion 8

const INFORMATIVE: [usize; 3] = [4, 19, 40];
// The shift (in noise standard deviations per segment) is kept weak enough
// that development AUC does not saturate at 1.0, where every candidate would
// tie and the lowest index would win.
const SFS_PATIENTS: usize = 200;
const SFS_DEV: usize = 60;
const SFS_SHIFT: f64 = 0.4;

fn sfs_fixture(seed: u64) -> Dataset {
    let cfg = FeatureConfig::new(13, 1024, 4);
    let names = cfg.dim_names();
    let mut rng = Rng::new(seed);
    let patients = (0..SFS_PATIENTS)
        .map(|i| {
            let positive = i % 2 == 0;
            let id = format!("p{i:03}");
            let data = (0..4 * 42).map(|k| rng.standard_normal() + if positive && INFORMATIVE.contains(&(k % 42)) { SFS_SHIFT } else { 0.0 }).collect();
            let fm = FeatureMatrix {
                values: Matrix::from_vec(4, 42, data).unwrap(),
                dim_names: names.clone(),
                patient_id: id.clone(),
                cough_id: format!("{id}/0"),
                label: if positive { Label::Positive } else { Label::Negative },
            };
            PatientFeatures { id, positive, coughs: vec![fm] }
        })
        .collect();
    Dataset::new(Some(cfg), patients).unwrap()
}

fn sfs_sanity() -> Outcome {
    let spec = ModelSpec::LR(LrParams { epochs: 20, ..Default::default() });
    let mut hits = 0;
    let mut firsts = Vec::new();
    for seed in 0..10 {
        let ds = sfs_fixture(100 + seed);
        let splits = make_inner_splits(&ds.labels(), SFS_DEV, 2, seed).map_err(|e| e.to_string())?;
        let res = sfs(&ds, &spec, &splits, &SfsConfig { max_dims: Some(6), seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let ranked = res.ranked();
        let sizes_increase = res.trace.iter().enumerate().all(|(i, s)| s.step == i + 1);
        let best = res.trace.iter().map(|s| s.dev_auc).fold(f64::NEG_INFINITY, f64::max);
        if !sizes_increase || res.best_auc() != Some(best) || ranked.len() != 6 {
            return Err(format!("seed {seed}: malformed trace {:?}", res.trace));
        }
        if INFORMATIVE.iter().all(|d| ranked.contains(d)) {
            hits += 1;
        }
        firsts.push(format!("{:?}", &ranked[..3]));
    }
    check(hits >= 9, format!("informative dims within the first 6 picks in {hits}/10 seeds; first picks {}", firsts.join(" ")))
}

// ---------------------------------------------------------------- criterion 9

/// Output size of a convolution or pooling window.
fn out_len(n: usize, k: usize, s: usize, p: usize) -> usize {
    (n + 2 * p - k) / s + 1
}

fn resnet_checks() -> Outcome {
    let (h, w) = (50, 117);
    // stem 7x7/2 pad 3 -> max pool 3x3/2 pad 1 -> stages with strides 1,2,2,2 on the 3x3 conv
    let mut expected = vec![("conv1".to_string(), [64, out_len(h, 7, 2, 3), out_len(w, 7, 2, 3)])];
    let (mut hh, mut ww) = (out_len(expected[0].1[1], 3, 2, 1), out_len(expected[0].1[2], 3, 2, 1));
    expected.push(("pool".into(), [64, hh, ww]));
    for (i, (width, stride)) in [(64, 1), (128, 2), (256, 2), (512, 2)].into_iter().enumerate() {
        hh = out_len(hh, 3, stride, 1);
        ww = out_len(ww, 3, stride, 1);
        expected.push((format!("conv{}_x", i + 2), [4 * width, hh, ww]));
    }
    expected.push(("gap".into(), [2048, 1, 1]));
    expected.push(("fc".into(), [2, 1, 1]));
    let net = ResNet::new(ResNetPreset::Resnet50Audio, h, w).ok_or("resnet50 does not build for 50x117")?;
    let trace_ok = net.shape_trace().as_slice() == expected.as_slice();
    let params = net.init(&mut Rng::new(1));
    let x: Vec<f64> = {
        let mut rng = Rng::new(2);
        (0..h * w).map(|_| rng.standard_normal()).collect()
    };
    let logits = net.logits(&params, &x);
    let logits_ok = logits.len() == 2 && logits.iter().all(|v| v.is_finite());

    // memorise 32 random inputs with shuffled balanced labels
    let mut rng = Rng::new(9);
    let xs: Vec<Matrix> = (0..32).map(|_| Matrix::from_vec(50, 39, (0..50 * 39).map(|_| rng.standard_normal()).collect()).unwrap()).collect();
    let mut ys: Vec<bool> = (0..32).map(|i| i < 16).collect();
    rng.shuffle(&mut ys);
    let spec = ModelSpec::ResNet(ResNetParams { preset: ResNetPreset::Tiny, epochs: 200, batch_size: 8, learning_rate: 0.01 });
    let accuracy = |m: &TrainedModel| xs.iter().zip(&ys).filter(|(x, &y)| (m.predict_proba(x).unwrap() >= 0.5) == y).count();
    let mut reached = None;
    let model = fit_with_monitor(&spec, &xs, &ys, 3, |epoch, m| {
        if accuracy(m) == 32 {
            reached = Some(epoch + 1);
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .map_err(|e| e.to_string())?;
    let final_acc = accuracy(&model);
    check(
        trace_ok && logits_ok && reached.is_some() && final_acc == 32,
        format!(
            "resnet50 trace matches={trace_ok}, logits {logits:?}; tiny net training accuracy {final_acc}/32, reached 100% at epoch {}",
            reached.map_or("never".into(), |e| e.to_string())
        ),
    )
}

// --------------------------------------------------------------- criterion 10

fn serialization() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = Rng::new(10);
    let shape = InputShape { segments: 6, dims: 5 };
    let train: Vec<Matrix> = (0..12).map(|_| Matrix::from_vec(6, 5, (0..30).map(|_| rng.standard_normal()).collect()).unwrap()).collect();
    let labels: Vec<bool> = (0..12).map(|i| i % 2 == 0).collect();
    let probe: Vec<Matrix> = (0..100).map(|_| Matrix::from_vec(6, 5, (0..30).map(|_| 3.0 * rng.standard_normal()).collect()).unwrap()).collect();
    for family in Family::ALL {
        let spec = match family {
            Family::CNN => ModelSpec::CNN(CnnParams { filters: 4, epochs: 2, ..Default::default() }),
            Family::LSTM => ModelSpec::LSTM(LstmParams { units: 6, epochs: 2, ..Default::default() }),
            Family::ResNet => ModelSpec::ResNet(ResNetParams { epochs: 2, ..Default::default() }),
            f => ModelSpec::default_for(f).with_schedule(5, 16, 0.05),
        };
        let model = coughnet::models::fit(&spec, &train, &labels, 4).map_err(|e| format!("{family}: {e}"))?;
        assert_eq!(model.shape(), shape);
        let path = dir.path().join(format!("{family}.model"));
        save_model(&model, &path).map_err(|e| e.to_string())?;
        let back = load_model(&path).map_err(|e| e.to_string())?;
        for x in &probe {
            let (a, b) = (model.predict_proba(x).unwrap(), back.predict_proba(x).unwrap());
            if a.to_bits() != b.to_bits() {
                return Err(format!("{family}: {a} != {b} after reload"));
            }
        }
    }
    // every PCM16 code point survives encode/decode and file write/read
    let codes: Vec<i16> = (i16::MIN..=i16::MAX).collect();
    let decoded = decode_wav(&encode_wav_pcm16(&codes, 1, 44_100)).map_err(|e| e.to_string())?;
    let exact = decoded.samples.iter().zip(&codes).all(|(s, &c)| (s * 32768.0) as i16 == c && *s == f64::from(c) / 32768.0);
    let path = dir.path().join("all.wav");
    write_wav_pcm16(&path, &decoded.samples, 44_100).map_err(|e| e.to_string())?;
    let clip = read_wav(&path).map_err(|e| e.to_string())?;
    let file_exact = clip.samples == decoded.samples && clip.sample_rate_hz == 44_100;
    check(
        exact && file_exact,
        format!("6 families reload bit-exactly on 100 inputs; {} PCM16 codes round-trip exactly={}", codes.len(), exact && file_exact),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("full-scale configuration", full_scale_configuration),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("DSP oracles", dsp_oracles),
        ("gradient checks", gradient_checks),
        ("SMOTE geometry", smote_geometry),
        ("evaluation oracles", evaluation_oracles),
        ("fold hygiene", fold_hygiene),
        ("SFS sanity", sfs_sanity),
        ("ResNet presets", resnet_checks),
        ("serialization", serialization),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("{label}: PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{label}: FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
