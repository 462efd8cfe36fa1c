//! Nested leave-p-out cross-validation with grid search.
//!
//! For every outer fold, each (feature config, model spec) pair of the grid
//! is trained on the fit side of each inner split (SMOTE applied to fit
//! patients only) and scored on the development patients with both patient
//! indexes. The pair/index with the best mean development AUC is retrained
//! on the whole training side and evaluated once on the held-out patients.

mod checkpoint;
mod data;
mod plan;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::mpsc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio_io::AudioError;
use crate::balance::{smote, BalanceError, SmoteConfig};
use crate::evaluation::{covid_indexes, eer_threshold, report, roc_auc, EvalError, EvalReport, PatientScore, ScoreFunction};
use crate::features::{FeatureConfig, FeatureError};
use crate::models::{fit, ModelError, ModelSpec, TrainedModel};
use crate::numerics::{derive_seed, Matrix, Rng};
use crate::preprocess::PreprocessError;
pub use checkpoint::{Checkpoint, UnitKey, UnitOutcome, UnitRecord};
pub use data::{AudioCorpus, Dataset, FeatureStore, PatientAudio, PatientFeatures};
pub use plan::{assert_disjoint, make_fold_plan, make_inner_splits, FoldPlan, InnerSplit, OuterFold, DEFAULT_INNER_SPLITS};

#[derive(Debug, Error)]
pub enum CrossvalError {
    #[error("invalid fold plan: {0}")]
    InvalidPlan(String),
    #[error("patient leakage: {0}")]
    Leakage(String),
    #[error("every grid point failed in outer fold {fold}")]
    SearchFailed { fold: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("no features extracted for {0}")]
    MissingFeatures(String),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
}

/// Cartesian search space: feature configs × model specs × score functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub features: Vec<FeatureConfig>,
    pub models: Vec<ModelSpec>,
    #[serde(default = "both_scores")]
    pub score_functions: Vec<ScoreFunction>,
}

fn both_scores() -> Vec<ScoreFunction> {
    ScoreFunction::ALL.to_vec()
}

impl SearchGrid {
    pub fn single(feature: FeatureConfig, model: ModelSpec, score_function: ScoreFunction) -> SearchGrid {
        SearchGrid { features: vec![feature], models: vec![model], score_functions: vec![score_function] }
    }

    pub fn len(&self) -> usize {
        self.features.len() * self.models.len() * self.score_functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `(feature, model)` index pairs to train, in lexicographic order.
    /// With a budget, a seeded subset of that many pairs is kept.
    pub fn pairs(&self, budget: Option<usize>, seed: u64) -> Vec<(usize, usize)> {
        let all: Vec<(usize, usize)> =
            (0..self.features.len()).flat_map(|f| (0..self.models.len()).map(move |m| (f, m))).collect();
        match budget {
            Some(b) if b < all.len() => {
                let mut picked = Rng::new(derive_seed(seed, &[0xB0D6E7])).sample_distinct(all.len(), b);
                picked.sort_unstable();
                picked.into_iter().map(|i| all[i]).collect()
            }
            _ => all,
        }
    }

    fn validate(&self) -> Result<(), CrossvalError> {
        if self.is_empty() {
            return Err(CrossvalError::EmptyInput("search grid has no points".into()));
        }
        for f in &self.features {
            f.validate()?;
        }
        for m in &self.models {
            m.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub seed: u64,
    pub smote: SmoteConfig,
    /// Worker threads; `None` uses all available cores.
    pub workers: Option<usize>,
    /// Maximum number of (feature, model) pairs to search.
    pub budget: Option<usize>,
    pub checkpoint: Option<PathBuf>,
}

/// Grid coordinates plus the values they point at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenPoint {
    pub feature_index: usize,
    pub model_index: usize,
    pub score_function: ScoreFunction,
    pub feature: FeatureConfig,
    pub model: ModelSpec,
    pub mean_dev_auc: f64,
    /// Mean of the inner development-set equal-error thresholds.
    pub gamma_ee: f64,
    pub decision_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointScore {
    pub feature_index: usize,
    pub model_index: usize,
    pub score_function: ScoreFunction,
    pub mean_dev_auc: f64,
    pub splits_scored: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_patients: Vec<String>,
    pub chosen: ChosenPoint,
    pub report: EvalReport,
    pub train_seed: u64,
    pub synthetic_coughs: usize,
    pub inner_scores: Vec<PointScore>,
    #[serde(skip)]
    pub model: TrainedModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_auc: f64,
    pub std_auc: f64,
    pub mean_sensitivity: f64,
    pub mean_specificity: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub summary: Summary,
    pub units_evaluated: usize,
    pub units_resumed: usize,
    pub fingerprint: String,
}

/// Settings and models for scoring unseen patients.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub feature: FeatureConfig,
    pub score_function: ScoreFunction,
    pub gamma_ee: f64,
    pub decision_threshold: f64,
    pub models: Vec<TrainedModel>,
}

impl CvResult {
    /// Outer folds whose chosen point is the most frequent one (ties to the
    /// smallest coordinates).
    pub fn deployment_folds(&self) -> Vec<usize> {
        let key = |c: &ChosenPoint| (c.feature_index, c.model_index, c.score_function);
        let mut counts: HashMap<_, usize> = HashMap::new();
        for f in &self.folds {
            *counts.entry(key(&f.chosen)).or_default() += 1;
        }
        let best = *counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).unwrap().0;
        self.folds.iter().filter(|f| key(&f.chosen) == best).map(|f| f.fold).collect()
    }

    /// Ensemble of the models from [`CvResult::deployment_folds`].
    pub fn deployment(&self) -> Deployment {
        let folds: Vec<&FoldResult> = self.deployment_folds().into_iter().map(|i| &self.folds[i]).collect();
        let chosen = &folds[0].chosen;
        let gamma = folds.iter().map(|f| f.chosen.gamma_ee).sum::<f64>() / folds.len() as f64;
        Deployment {
            feature: chosen.feature.clone(),
            score_function: chosen.score_function,
            gamma_ee: gamma,
            decision_threshold: decision_threshold(chosen.score_function, gamma),
            models: folds.iter().map(|f| f.model.clone()).collect(),
        }
    }
}

/// I1 already thresholds each cough at γ, so patients are called at 0.5;
/// I2 is a raw probability and is called at γ.
pub fn decision_threshold(score_function: ScoreFunction, gamma_ee: f64) -> f64 {
    match score_function {
        ScoreFunction::I1 => 0.5,
        ScoreFunction::I2 => gamma_ee,
    }
}

/// Segment probabilities per cough for one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientProbabilities {
    pub id: String,
    pub positive: bool,
    pub per_cough: Vec<Vec<f64>>,
}

/// Trained model plus provenance of the SMOTE synthetics it saw.
pub struct SplitModel {
    pub model: TrainedModel,
    pub synthetic: usize,
}

/// Trains `spec` on the coughs of `fit_ids`, oversampling the minority
/// class with SMOTE on flattened cough matrices first.
pub fn train_on(dataset: &Dataset, fit_ids: &[String], spec: &ModelSpec, smote_cfg: &SmoteConfig, seed: u64) -> Result<SplitModel, CrossvalError> {
    let mut inputs: Vec<Matrix> = Vec::new();
    let mut labels = Vec::new();
    let mut owners: Vec<&str> = Vec::new();
    for id in fit_ids {
        let p = dataset.require(id)?;
        for c in &p.coughs {
            inputs.push(c.values.clone());
            labels.push(p.positive);
            owners.push(&p.id);
        }
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    let minority_label = n_pos < n_neg;
    let (m_count, maj_count) = if minority_label { (n_pos, n_neg) } else { (n_neg, n_pos) };
    let mut synthetic = 0;
    if m_count != maj_count && m_count >= 2 {
        let idx: Vec<usize> = (0..inputs.len()).filter(|&i| labels[i] == minority_label).collect();
        let vectors: Vec<&[f64]> = idx.iter().map(|&i| inputs[i].as_slice()).collect();
        let cfg = SmoteConfig { seed: derive_seed(seed, &[smote_cfg.seed, 0x5307E]), ..*smote_cfg };
        let (rows, cols) = inputs[0].shape();
        let fit_set: std::collections::HashSet<&str> = fit_ids.iter().map(String::as_str).collect();
        for s in smote(&vectors, maj_count, &cfg)? {
            for parent in [s.parent, s.neighbor] {
                let owner = owners[idx[parent]];
                if !fit_set.contains(owner) {
                    return Err(CrossvalError::Leakage(format!("synthetic parent from non-fit patient {owner}")));
                }
            }
            inputs.push(Matrix::from_vec(rows, cols, s.values).expect("smote keeps vector length"));
            labels.push(minority_label);
            synthetic += 1;
        }
    } else if m_count < 2 && m_count != maj_count {
        warn!("fewer than two minority coughs; training without SMOTE");
    }
    let model = fit(spec, &inputs, &labels, seed)?;
    Ok(SplitModel { model, synthetic })
}

/// Segment probabilities averaged over `models` for each cough of each patient.
pub fn score_patients(dataset: &Dataset, ids: &[String], models: &[&TrainedModel]) -> Result<Vec<PatientProbabilities>, CrossvalError> {
    ids.iter()
        .map(|id| {
            let p = dataset.require(id)?;
            let per_cough = p
                .coughs
                .iter()
                .map(|c| -> Result<Vec<f64>, CrossvalError> {
                    let mut acc = models[0].segment_probabilities(&c.values)?;
                    for m in &models[1..] {
                        for (a, v) in acc.iter_mut().zip(m.segment_probabilities(&c.values)?) {
                            *a += v;
                        }
                    }
                    acc.iter_mut().for_each(|a| *a /= models.len() as f64);
                    Ok(acc)
                })
                .collect::<Result<_, _>>()?;
            Ok(PatientProbabilities { id: p.id.clone(), positive: p.positive, per_cough })
        })
        .collect()
}

/// Cough-level equal-error threshold over per-cough `P̂`.
pub fn cough_eer(probs: &[PatientProbabilities]) -> Result<f64, EvalError> {
    let scores: Vec<(f64, bool)> = probs
        .iter()
        .flat_map(|p| p.per_cough.iter().map(move |c| (crate::evaluation::mean_probability(c), p.positive)))
        .collect();
    Ok(eer_threshold(&roc_auc(&scores)?))
}

pub fn patient_scores(probs: &[PatientProbabilities], gamma: f64) -> Result<Vec<PatientScore>, EvalError> {
    probs.iter().map(|p| covid_indexes(&p.id, p.positive, &p.per_cough, gamma)).collect()
}

fn evaluate_unit(
    store: &FeatureStore,
    grid: &SearchGrid,
    plan: &FoldPlan,
    cfg: &CvConfig,
    (fold, split, fi, mi): UnitKey,
) -> Result<UnitOutcome, CrossvalError> {
    let ds = store.get(&grid.features[fi])?;
    let outer = &plan.outer[fold];
    let inner = &outer.inner[split];
    assert_disjoint(&[("test", &outer.test), ("fit", &inner.fit), ("dev", &inner.dev)])?;
    let seed = derive_seed(cfg.seed, &[1, fold as u64, split as u64, fi as u64, mi as u64]);
    let trained = match train_on(&ds, &inner.fit, &grid.models[mi], &cfg.smote, seed) {
        Ok(t) => t,
        Err(CrossvalError::Model(ModelError::Diverged { epoch })) => return Ok(UnitOutcome::Diverged { epoch }),
        Err(e) => return Err(e),
    };
    let probs = score_patients(&ds, &inner.dev, &[&trained.model])?;
    let gamma = match cough_eer(&probs) {
        Ok(g) => g,
        Err(EvalError::DegenerateLabels { .. }) => return Ok(UnitOutcome::Degenerate),
        Err(e) => return Err(e.into()),
    };
    let scores = patient_scores(&probs, gamma)?;
    let auc = |f: ScoreFunction| roc_auc(&scores.iter().map(|s| (s.index(f), s.positive)).collect::<Vec<_>>()).map(|r| r.auc);
    match (auc(ScoreFunction::I1), auc(ScoreFunction::I2)) {
        (Ok(auc_i1), Ok(auc_i2)) => Ok(UnitOutcome::Scored { auc_i1, auc_i2, gamma }),
        (Err(EvalError::DegenerateLabels { .. }), _) | (_, Err(EvalError::DegenerateLabels { .. })) => Ok(UnitOutcome::Degenerate),
        (Err(e), _) | (_, Err(e)) => Err(e.into()),
    }
}

fn fingerprint(dataset_labels: &[(String, bool)], grid: &SearchGrid, plan: &FoldPlan, cfg: &CvConfig, pairs: &[(usize, usize)]) -> String {
    #[derive(Serialize)]
    struct Fp<'a> {
        labels: &'a [(String, bool)],
        grid: &'a SearchGrid,
        plan: &'a FoldPlan,
        seed: u64,
        smote: &'a SmoteConfig,
        pairs: &'a [(usize, usize)],
    }
    let json = serde_json::to_vec(&Fp { labels: dataset_labels, grid, plan, seed: cfg.seed, smote: &cfg.smote, pairs }).unwrap();
    hex::encode(&Sha256::digest(&json)[..16])
}

fn build_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CrossvalError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CrossvalError::Pool(e.to_string()))
}

/// Ranks every searched `(feature, model, score function)` point of one fold
/// by mean development AUC; points that diverged in any split are dropped.
fn rank_points(
    fold: usize,
    n_splits: usize,
    pairs: &[(usize, usize)],
    grid: &SearchGrid,
    outcomes: &HashMap<UnitKey, UnitOutcome>,
) -> Vec<(PointScore, f64)> {
    let mut ranked = Vec::new();
    for &(fi, mi) in pairs {
        let results: Vec<UnitOutcome> = (0..n_splits).map(|s| outcomes[&(fold, s, fi, mi)]).collect();
        if let Some(UnitOutcome::Diverged { epoch }) = results.iter().find(|o| matches!(o, UnitOutcome::Diverged { .. })) {
            warn!("fold {fold}: {} / {} diverged (epoch {epoch}); skipped", grid.features[fi].label(), grid.models[mi]);
            continue;
        }
        let scored: Vec<(f64, f64, f64)> = results
            .iter()
            .filter_map(|o| match *o {
                UnitOutcome::Scored { auc_i1, auc_i2, gamma } => Some((auc_i1, auc_i2, gamma)),
                _ => None,
            })
            .collect();
        if scored.is_empty() {
            continue;
        }
        let n = scored.len() as f64;
        let gamma = scored.iter().map(|s| s.2).sum::<f64>() / n;
        for &sf in &grid.score_functions {
            let mean = scored.iter().map(|s| if sf == ScoreFunction::I1 { s.0 } else { s.1 }).sum::<f64>() / n;
            ranked.push((
                PointScore { feature_index: fi, model_index: mi, score_function: sf, mean_dev_auc: mean, splits_scored: scored.len() },
                gamma,
            ));
        }
    }
    // best first; ties to the lexicographically smallest coordinates
    ranked.sort_by(|(a, _), (b, _)| {
        b.mean_dev_auc
            .total_cmp(&a.mean_dev_auc)
            .then((a.feature_index, a.model_index, a.score_function).cmp(&(b.feature_index, b.model_index, b.score_function)))
    });
    ranked
}

/// Runs the full nested search. Results depend only on the dataset, grid,
/// plan and config seed, never on the worker count or on resumption.
pub fn run_nested_cv(store: &FeatureStore, grid: &SearchGrid, plan: &FoldPlan, cfg: &CvConfig) -> Result<CvResult, CrossvalError> {
    grid.validate()?;
    plan.validate()?;
    if plan.outer.is_empty() {
        return Err(CrossvalError::InvalidPlan("plan has no outer folds".into()));
    }
    let first = store.get(&grid.features[0])?;
    let labels = first.labels();
    for f in &grid.features {
        let ds = store.get(f)?;
        for fold in &plan.outer {
            for id in fold.test.iter().chain(&fold.train) {
                ds.require(id)?;
            }
        }
    }
    let pairs = grid.pairs(cfg.budget, cfg.seed);
    let fp = fingerprint(&labels, grid, plan, cfg, &pairs);

    let (mut checkpoint, mut outcomes) = match &cfg.checkpoint {
        Some(path) => {
            let (c, done) = Checkpoint::open(path, &fp)?;
            (Some(c), done)
        }
        None => (None, HashMap::new()),
    };
    let pairs_ref = &pairs;
    let units: Vec<UnitKey> = plan
        .outer
        .iter()
        .enumerate()
        .flat_map(|(f, fold)| (0..fold.inner.len()).flat_map(move |s| pairs_ref.iter().map(move |&(fi, mi)| (f, s, fi, mi))))
        .collect();
    let todo: Vec<UnitKey> = units.iter().copied().filter(|k| !outcomes.contains_key(k)).collect();
    let units_resumed = units.len() - todo.len();
    info!("nested CV: {} inner evaluations ({} resumed from checkpoint)", units.len(), units_resumed);

    let pool = build_pool(cfg.workers)?;
    let (tx, rx) = mpsc::channel::<UnitRecord>();
    let computed: Result<(), CrossvalError> = std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> Result<Vec<UnitRecord>, CrossvalError> {
            let mut got = Vec::new();
            for rec in rx {
                if let Some(c) = checkpoint.as_mut() {
                    c.append(&rec)?;
                }
                got.push(rec);
            }
            Ok(got)
        });
        let result = pool.install(|| {
            todo.par_iter().try_for_each_with(tx, |tx, &key| {
                let outcome = evaluate_unit(store, grid, plan, cfg, key)?;
                let rec = UnitRecord { fold: key.0, split: key.1, feature: key.2, model: key.3, outcome };
                tx.send(rec).map_err(|e| CrossvalError::Pool(e.to_string()))
            })
        });
        let records = writer.join().map_err(|_| CrossvalError::Pool("checkpoint writer panicked".into()))??;
        for rec in records {
            outcomes.insert(rec.key(), rec.outcome);
        }
        result
    });
    computed?;

    let folds: Vec<FoldResult> = pool.install(|| {
        plan.outer
            .par_iter()
            .enumerate()
            .map(|(f, fold)| final_fold(store, grid, cfg, f, fold, &pairs, &outcomes))
            .collect::<Result<_, _>>()
    })?;

    let n = folds.len() as f64;
    let mean = |g: &dyn Fn(&FoldResult) -> f64| folds.iter().map(g).sum::<f64>() / n;
    let mean_auc = mean(&|f| f.report.auc);
    let summary = Summary {
        mean_auc,
        std_auc: (mean(&|f| (f.report.auc - mean_auc).powi(2))).sqrt(),
        mean_sensitivity: mean(&|f| f.report.sensitivity),
        mean_specificity: mean(&|f| f.report.specificity),
        mean_accuracy: mean(&|f| f.report.accuracy),
    };
    Ok(CvResult { folds, summary, units_evaluated: todo.len(), units_resumed, fingerprint: fp })
}

fn final_fold(
    store: &FeatureStore,
    grid: &SearchGrid,
    cfg: &CvConfig,
    f: usize,
    fold: &OuterFold,
    pairs: &[(usize, usize)],
    outcomes: &HashMap<UnitKey, UnitOutcome>,
) -> Result<FoldResult, CrossvalError> {
    let ranked = rank_points(f, fold.inner.len(), pairs, grid, outcomes);
    let inner_scores: Vec<PointScore> = ranked.iter().map(|r| r.0.clone()).collect();
    for (point, gamma) in &ranked {
        let ds = store.get(&grid.features[point.feature_index])?;
        let spec = &grid.models[point.model_index];
        let train_seed = derive_seed(cfg.seed, &[2, f as u64, point.feature_index as u64, point.model_index as u64]);
        assert_disjoint(&[("test", &fold.test), ("train", &fold.train)])?;
        let trained = match train_on(&ds, &fold.train, spec, &cfg.smote, train_seed) {
            Ok(t) => t,
            Err(CrossvalError::Model(ModelError::Diverged { epoch })) => {
                warn!("fold {f}: final training of {spec} diverged (epoch {epoch}); trying next point");
                continue;
            }
            Err(e) => return Err(e),
        };
        let threshold = decision_threshold(point.score_function, *gamma);
        let probs = score_patients(&ds, &fold.test, &[&trained.model])?;
        let report = report(&patient_scores(&probs, *gamma)?, point.score_function, threshold)?;
        info!("fold {f}: {} / {} / {} -> test AUC {:.4}", grid.features[point.feature_index].label(), spec, point.score_function, report.auc);
        return Ok(FoldResult {
            fold: f,
            test_patients: fold.test.clone(),
            chosen: ChosenPoint {
                feature_index: point.feature_index,
                model_index: point.model_index,
                score_function: point.score_function,
                feature: grid.features[point.feature_index].clone(),
                model: spec.clone(),
                mean_dev_auc: point.mean_dev_auc,
                gamma_ee: *gamma,
                decision_threshold: threshold,
            },
            report,
            train_seed,
            synthetic_coughs: trained.synthetic,
            inner_scores,
            model: trained.model,
        });
    }
    Err(CrossvalError::SearchFailed { fold: f })
}

/// Scores an unseen cohort with already-trained models: no training and no
/// SMOTE. Every patient in `dataset` is reported.
pub fn evaluate_external(deployment: &Deployment, dataset: &Dataset) -> Result<EvalReport, CrossvalError> {
    if deployment.models.is_empty() {
        return Err(CrossvalError::EmptyInput("no models to evaluate".into()));
    }
    if let Some(cfg) = dataset.config() {
        if cfg.hash() != deployment.feature.hash() {
            return Err(ModelError::Shape { expected: deployment.feature.label(), got: cfg.label() }.into());
        }
    }
    let ids: Vec<String> = dataset.patients().iter().map(|p| p.id.clone()).collect();
    let models: Vec<&TrainedModel> = deployment.models.iter().collect();
    let probs = score_patients(dataset, &ids, &models)?;
    Ok(report(&patient_scores(&probs, deployment.gamma_ee)?, deployment.score_function, deployment.decision_threshold)?)
}

#[cfg(test)]
mod tests;
