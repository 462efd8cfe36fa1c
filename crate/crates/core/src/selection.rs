//! Greedy sequential forward search over feature dimensions.
//!
//! The model specification stays fixed for the whole search. Segment-level
//! families see only the selected columns; matrix families keep the full
//! input shape with unselected columns zeroed.

use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::SmoteConfig;
use crate::crossval::{cough_eer, patient_scores, score_patients, train_on, CrossvalError, Dataset, InnerSplit};
use crate::evaluation::{roc_auc, ScoreFunction};
use crate::features::FeatureMatrix;
use crate::models::{ModelError, ModelSpec};
use crate::numerics::{derive_seed, Matrix};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("invalid selection input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Crossval(#[from] CrossvalError),
    #[error("cannot write trace to {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Development splits used to score each candidate.
pub const DEFAULT_SFS_SPLITS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfsConfig {
    /// Stop after this many dimensions; `None` runs until every dim is placed.
    pub max_dims: Option<usize>,
    pub score_function: ScoreFunction,
    pub seed: u64,
    pub smote: SmoteConfig,
    pub workers: Option<usize>,
}

impl Default for SfsConfig {
    fn default() -> Self {
        Self { max_dims: None, score_function: ScoreFunction::I2, seed: 0, smote: SmoteConfig::default(), workers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfsStep {
    /// Subset size after this step (1-based).
    pub step: usize,
    pub dim: usize,
    pub dim_name: String,
    pub dev_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfsResult {
    pub trace: Vec<SfsStep>,
    /// Dims that diverged in every split whenever they were tried.
    pub skipped: Vec<usize>,
}

impl SfsResult {
    /// Selected dims in selection order.
    pub fn ranked(&self) -> Vec<usize> {
        self.trace.iter().map(|s| s.dim).collect()
    }

    /// Step with the highest development AUC; the smaller subset wins ties.
    pub fn best_step(&self) -> Option<&SfsStep> {
        self.trace.iter().fold(None, |best: Option<&SfsStep>, s| match best {
            Some(b) if b.dev_auc >= s.dev_auc => Some(b),
            _ => Some(s),
        })
    }

    pub fn best_auc(&self) -> Option<f64> {
        self.best_step().map(|s| s.dev_auc)
    }

    pub fn best_subset(&self) -> Vec<usize> {
        let k = self.best_step().map_or(0, |s| s.step);
        self.trace[..k].iter().map(|s| s.dim).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "dim_name", "dev_auc"])?;
        for s in &self.trace {
            w.write_record([s.step.to_string(), s.dim_name.clone(), s.dev_auc.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), SelectionError> {
        let io = |e: String| SelectionError::Io { path: path.display().to_string(), reason: e };
        let file = std::fs::File::create(path).map_err(|e| io(e.to_string()))?;
        self.write_csv(file).map_err(|e| io(e.to_string()))
    }
}

/// Restricts every cough matrix to `dims`: segment-level families get only
/// those columns (in the given order), matrix families keep every column but
/// with the others set to zero.
pub fn mask_dataset(dataset: &Dataset, dims: &[usize], drop_columns: bool) -> Result<Dataset, CrossvalError> {
    let keep: Vec<bool> = (0..dataset.shape().1).map(|d| dims.contains(&d)).collect();
    dataset.map_matrices(|fm| {
        let (values, dim_names) = if drop_columns {
            (fm.values.select_columns(dims), dims.iter().map(|&d| fm.dim_names[d].clone()).collect())
        } else {
            let (r, c) = fm.values.shape();
            let data = fm.values.as_slice().iter().enumerate().map(|(i, &v)| if keep[i % c] { v } else { 0.0 }).collect();
            (Matrix::from_vec(r, c, data).expect("same shape"), fm.dim_names.clone())
        };
        FeatureMatrix { values, dim_names, ..fm.clone() }
    })
}

/// Mean development AUC of `spec` on `dataset` restricted to `dims`, or
/// `None` when training diverged in every split.
fn subset_auc(dataset: &Dataset, dims: &[usize], spec: &ModelSpec, splits: &[InnerSplit], cfg: &SfsConfig) -> Result<Option<f64>, CrossvalError> {
    let ds = mask_dataset(dataset, dims, spec.family().segment_level())?;
    let mut total = 0.0;
    let mut n = 0usize;
    for (s, split) in splits.iter().enumerate() {
        let seed = derive_seed(cfg.seed, &[s as u64]);
        let trained = match train_on(&ds, &split.fit, spec, &cfg.smote, seed) {
            Ok(t) => t,
            Err(CrossvalError::Model(ModelError::Diverged { .. })) => continue,
            Err(e) => return Err(e),
        };
        let probs = score_patients(&ds, &split.dev, &[&trained.model])?;
        let gamma = cough_eer(&probs)?;
        let scores = patient_scores(&probs, gamma)?;
        let roc = roc_auc(&scores.iter().map(|p| (p.index(cfg.score_function), p.positive)).collect::<Vec<_>>())?;
        total += roc.auc;
        n += 1;
    }
    Ok((n > 0).then(|| total / n as f64))
}

/// Starting from the empty set, repeatedly adds the remaining dimension whose
/// inclusion gives the highest mean development AUC over `splits` (ties go
/// to the lowest index). Candidates within a step are evaluated in parallel.
pub fn sfs(dataset: &Dataset, spec: &ModelSpec, splits: &[InnerSplit], cfg: &SfsConfig) -> Result<SfsResult, SelectionError> {
    let d = dataset.shape().1;
    if d < 2 {
        return Err(SelectionError::InvalidInput(format!("need at least 2 dims, got {d}")));
    }
    if splits.is_empty() {
        return Err(SelectionError::InvalidInput("no development splits".into()));
    }
    for split in splits {
        crate::crossval::assert_disjoint(&[("fit", &split.fit), ("dev", &split.dev)])?;
    }
    spec.validate().map_err(CrossvalError::from)?;
    let names = dataset.dim_names();
    let limit = cfg.max_dims.unwrap_or(d).min(d);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| CrossvalError::Pool(e.to_string()))?;

    let mut selected: Vec<usize> = Vec::new();
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut trace = Vec::new();
    while selected.len() < limit && !remaining.is_empty() {
        let scored: Vec<(usize, Option<f64>)> = pool.install(|| {
            remaining
                .par_iter()
                .map(|&dim| {
                    let mut dims = selected.clone();
                    dims.push(dim);
                    subset_auc(dataset, &dims, spec, splits, cfg).map(|a| (dim, a))
                })
                .collect::<Result<_, _>>()
        })?;
        let mut best: Option<(usize, f64)> = None;
        for (dim, auc) in scored {
            match auc {
                None => {
                    warn!("dim {} ({}) diverged in every split; skipping", dim, names[dim]);
                    remaining.retain(|&r| r != dim);
                }
                // `remaining` is ascending, so strict improvement keeps the lowest index on ties
                Some(a) if best.is_none_or(|(_, b)| a > b) => best = Some((dim, a)),
                Some(_) => {}
            }
        }
        let Some((dim, auc)) = best else { break };
        remaining.retain(|&r| r != dim);
        selected.push(dim);
        info!("sfs step {}: +{} -> dev AUC {auc:.4}", selected.len(), names[dim]);
        trace.push(SfsStep { step: selected.len(), dim, dim_name: names[dim].clone(), dev_auc: auc });
    }
    let skipped = (0..d).filter(|x| !selected.contains(x) && !remaining.contains(x)).collect();
    Ok(SfsResult { trace, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::Label;
    use crate::crossval::{make_inner_splits, PatientFeatures};
    use crate::models::{Family, LrParams};
    use crate::numerics::Rng;
    use proptest::prelude::*;

    /// `informative` dims carry a class shift; the rest are noise.
    fn fixture(n: usize, d: usize, informative: &[usize], seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let s = 3;
        let patients = (0..n)
            .map(|i| {
                let positive = i % 2 == 0;
                let id = format!("p{i}");
                let data = (0..s * d)
                    .map(|k| rng.standard_normal() + if positive && informative.contains(&(k % d)) { 1.5 } else { 0.0 })
                    .collect();
                let fm = FeatureMatrix {
                    values: Matrix::from_vec(s, d, data).unwrap(),
                    dim_names: (0..d).map(|j| format!("d{j}")).collect(),
                    patient_id: id.clone(),
                    cough_id: format!("{id}/0"),
                    label: if positive { Label::Positive } else { Label::Negative },
                };
                PatientFeatures { id, positive, coughs: vec![fm] }
            })
            .collect();
        Dataset::new(None, patients).unwrap()
    }

    fn lr() -> ModelSpec {
        ModelSpec::LR(LrParams { epochs: 20, ..Default::default() })
    }

    #[test]
    fn informative_dim_first() {
        let ds = fixture(40, 2, &[1], 3);
        let splits = make_inner_splits(&ds.labels(), 10, DEFAULT_SFS_SPLITS, 1).unwrap();
        let res = sfs(&ds, &lr(), &splits, &SfsConfig::default()).unwrap();
        assert_eq!(res.ranked(), vec![1, 0]);
        assert_eq!(res.trace[0].dim_name, "d1");
        assert_eq!(res.best_auc(), res.trace.iter().map(|s| s.dev_auc).reduce(f64::max));
    }

    #[test]
    fn max_dims_and_csv() {
        let ds = fixture(30, 5, &[2], 4);
        let splits = make_inner_splits(&ds.labels(), 8, 2, 2).unwrap();
        let res = sfs(&ds, &lr(), &splits, &SfsConfig { max_dims: Some(3), ..Default::default() }).unwrap();
        assert_eq!(res.trace.len(), 3);
        assert!(res.trace.windows(2).all(|w| w[1].step == w[0].step + 1));
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,dim_name,dev_auc\n1,d2,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn masking_preserves_matrix_shape() {
        let ds = fixture(6, 4, &[], 1);
        let zeroed = mask_dataset(&ds, &[2, 0], false).unwrap();
        assert_eq!(zeroed.shape(), (3, 4));
        let orig = &ds.patients()[0].coughs[0].values;
        let m = &zeroed.patients()[0].coughs[0].values;
        for r in 0..3 {
            assert_eq!(m.row(r), &[orig.row(r)[0], 0.0, orig.row(r)[2], 0.0]);
        }
        let dropped = mask_dataset(&ds, &[2, 0], true).unwrap();
        assert_eq!(dropped.shape(), (3, 2));
        assert_eq!(dropped.dim_names(), vec!["d2", "d0"]);
    }

    #[test]
    fn matrix_families_use_zero_masking() {
        assert!(Family::LR.segment_level() && !Family::LSTM.segment_level());
        let ds = fixture(24, 3, &[0], 5);
        let splits = make_inner_splits(&ds.labels(), 6, 1, 3).unwrap();
        let spec = ModelSpec::default_for(Family::LSTM).with_schedule(3, 16, 0.01);
        let res = sfs(&ds, &spec, &splits, &SfsConfig { max_dims: Some(1), ..Default::default() }).unwrap();
        assert_eq!(res.trace.len(), 1);
    }

    #[test]
    fn rejects_single_dim() {
        let ds = fixture(10, 1, &[0], 1);
        let splits = make_inner_splits(&ds.labels(), 3, 1, 1).unwrap();
        assert!(matches!(sfs(&ds, &lr(), &splits, &SfsConfig::default()), Err(SelectionError::InvalidInput(_))));
    }

    #[test]
    fn diverging_spec_skips_everything() {
        let ds = fixture(20, 3, &[0], 1);
        let splits = make_inner_splits(&ds.labels(), 5, 1, 1).unwrap();
        let bad = ModelSpec::LR(LrParams { strength: 1e-7, learning_rate: 1.0, ..Default::default() });
        let res = sfs(&ds, &bad, &splits, &SfsConfig::default()).unwrap();
        assert!(res.trace.is_empty());
        assert_eq!(res.skipped, vec![0, 1, 2]);
        assert_eq!(res.best_auc(), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn subsets_nest_and_best_is_trace_max(seed in any::<u64>(), d in 2usize..6) {
            let ds = fixture(16, d, &[0], seed);
            let splits = make_inner_splits(&ds.labels(), 4, 2, seed).unwrap();
            let res = sfs(&ds, &ModelSpec::LR(LrParams { epochs: 3, ..Default::default() }), &splits, &SfsConfig { seed, ..Default::default() }).unwrap();
            prop_assert_eq!(res.trace.len(), d);
            let mut dims = res.ranked();
            dims.sort();
            dims.dedup();
            prop_assert_eq!(dims.len(), d);
            let best = res.best_auc().unwrap();
            prop_assert!(res.trace.iter().all(|s| s.dev_auc <= best));
            prop_assert_eq!(res.best_subset().len(), res.best_step().unwrap().step);
        }
    }
}
