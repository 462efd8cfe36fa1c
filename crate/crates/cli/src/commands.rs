use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use coughnet::audio_io::{load_manifest, AudioError};
use coughnet::balance::smote;
use coughnet::crossval::{evaluate_external, make_fold_plan, make_inner_splits, run_nested_cv, AudioCorpus, CvConfig, CvResult, Dataset, Deployment, FeatureStore};
use coughnet::evaluation::{EvalReport, ScoreFunction};
use coughnet::features::FeatureConfig;
use coughnet::models::{load_model, save_model};
use coughnet::preprocess::TrimConfig;
use coughnet::selection::{sfs, SfsConfig};
use coughnet::synth::run_synth_demo;
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{fold_rows, read_rows, render, write_rows, Row};

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Globals {
    pub seed: u64,
    pub workers: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub trim_margin_ms: Option<f64>,
    pub trim_window_ms: Option<f64>,
    pub trim_threshold_db: Option<f64>,
}

impl Globals {
    fn trim(&self, base: TrimConfig) -> TrimConfig {
        TrimConfig {
            margin_ms: self.trim_margin_ms.unwrap_or(base.margin_ms),
            window_ms: self.trim_window_ms.unwrap_or(base.window_ms),
            threshold_db: self.trim_threshold_db.unwrap_or(base.threshold_db),
        }
    }

    /// Flag or environment first, then the run config.
    fn cache_dir(&self, cfg: &RunConfig) -> Option<PathBuf> {
        self.cache_dir.clone().or_else(|| cfg.cache_dir.clone())
    }
}

pub const DEFAULT_CACHE_DIR: &str = "coughnet-cache";
pub const DEMO_TARGET_AUC: f64 = 0.95;

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("results serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), line: Some(e.line()), message: e.to_string() })
}

fn write_roc(path: &Path, report: &EvalReport) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(CliError::io(path))?;
    Ok(report.roc.write_csv(file)?)
}

fn load_records(path: &Path) -> Result<Vec<coughnet::audio_io::PatientRecord>, CliError> {
    load_manifest(path).map_err(|e| match e {
        AudioError::Manifest { line, reason } => CliError::Config { path: path.to_path_buf(), line: Some(line as usize), message: reason },
        other => other.into(),
    })
}

fn manifest_path(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    flag.or_else(|| cfg.manifest.clone()).ok_or_else(|| CliError::Usage("no manifest: pass --manifest or set `manifest` in the run config".into()))
}

fn load_store(g: &Globals, cfg: &RunConfig, manifest: &Path, features: &[FeatureConfig], cache: Option<&Path>) -> Result<FeatureStore, CliError> {
    let records = load_records(manifest)?;
    let corpus = AudioCorpus::load(&records, &g.trim(cfg.trim))?;
    info!("loaded {} patients from {}", corpus.patients.len(), manifest.display());
    Ok(FeatureStore::from_corpus(&corpus, features, cache)?)
}

pub fn extract(g: &Globals, config: &Path, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let manifest = manifest_path(manifest, &cfg)?;
    let cache = g.cache_dir(&cfg).unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
    let store = load_store(g, &cfg, &manifest, &cfg.features, Some(&cache))?;
    let mut out = std::io::stdout().lock();
    for f in &cfg.features {
        let ds = store.get(f)?;
        writeln!(out, "{}  {}  {} patients  {} coughs  -> {}", f.hash(), f.label(), ds.patients().len(), ds.n_coughs(), cache.join(f.hash()).display())
            .map_err(CliError::io(Path::new("<stdout>")))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct BalancePreview {
    feature: String,
    positive_patients: usize,
    negative_patients: usize,
    positive_coughs: usize,
    negative_coughs: usize,
    minority: &'static str,
    synthetic: usize,
    balanced_positive: usize,
    balanced_negative: usize,
}

pub fn balance_preview(g: &Globals, config: &Path, manifest: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let manifest = manifest_path(manifest, &cfg)?;
    let feature = &cfg.features[0];
    let store = load_store(g, &cfg, &manifest, std::slice::from_ref(feature), g.cache_dir(&cfg).as_deref())?;
    let ds = store.get(feature)?;
    let count = |pos: bool| ds.patients().iter().filter(|p| p.positive == pos).map(|p| p.coughs.len()).sum::<usize>();
    let (pos, neg) = (count(true), count(false));
    let minority_positive = pos <= neg;
    let minority: Vec<&[f64]> =
        ds.patients().iter().filter(|p| p.positive == minority_positive).flat_map(|p| p.coughs.iter().map(|c| c.values.as_slice())).collect();
    let majority = pos.max(neg);
    let smote_cfg = coughnet::balance::SmoteConfig { seed: g.seed, ..cfg.smote };
    let synthetic = if minority.len() >= 2 { smote(&minority, majority, &smote_cfg)?.len() } else { 0 };
    let preview = BalancePreview {
        feature: feature.label(),
        positive_patients: ds.patients().iter().filter(|p| p.positive).count(),
        negative_patients: ds.patients().iter().filter(|p| !p.positive).count(),
        positive_coughs: pos,
        negative_coughs: neg,
        minority: if minority_positive { "positive" } else { "negative" },
        synthetic,
        balanced_positive: pos + if minority_positive { synthetic } else { 0 },
        balanced_negative: neg + if minority_positive { 0 } else { synthetic },
    };
    println!("{}", serde_json::to_string_pretty(&preview).expect("serializes"));
    Ok(())
}

/// On-disk form of a [`Deployment`]; model paths are relative to the run dir.
#[derive(Debug, Serialize, Deserialize)]
struct DeploymentFile {
    feature: FeatureConfig,
    score_function: ScoreFunction,
    gamma_ee: f64,
    decision_threshold: f64,
    models: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    seed: u64,
    fingerprint: &'a str,
    units_evaluated: usize,
    units_resumed: usize,
    summary: coughnet::crossval::Summary,
}

/// Writes per-fold reports, ROC curves, models and the deployment bundle.
pub fn write_run(out: &Path, seed: u64, res: &CvResult) -> Result<(), CliError> {
    create_dir(&out.join("models"))?;
    for f in &res.folds {
        write_json(&out.join(format!("fold_{}.json", f.fold)), f)?;
        write_roc(&out.join(format!("roc_fold{}.csv", f.fold)), &f.report)?;
        save_model(&f.model, out.join(format!("models/fold{}.model", f.fold)))?;
    }
    let mut rows = fold_rows(&res.folds);
    let s = &res.summary;
    rows.push(Row::from_numbers("mean", [s.mean_specificity, s.mean_sensitivity, s.mean_accuracy, s.mean_auc]));
    write_rows(&out.join("results.csv"), &rows)?;
    write_json(
        &out.join("summary.json"),
        &RunSummary { seed, fingerprint: &res.fingerprint, units_evaluated: res.units_evaluated, units_resumed: res.units_resumed, summary: res.summary },
    )?;

    let dep = res.deployment();
    let models = res.deployment_folds().iter().map(|f| PathBuf::from(format!("models/fold{f}.model"))).collect();
    write_json(
        &out.join("deployment.json"),
        &DeploymentFile { feature: dep.feature, score_function: dep.score_function, gamma_ee: dep.gamma_ee, decision_threshold: dep.decision_threshold, models },
    )
}

fn print_summary(res: &CvResult) {
    let s = &res.summary;
    println!(
        "{} outer folds: AUC {:.4} ± {:.4}, sensitivity {:.4}, specificity {:.4}, accuracy {:.4}",
        res.folds.len(),
        s.mean_auc,
        s.std_auc,
        s.mean_sensitivity,
        s.mean_specificity,
        s.mean_accuracy
    );
}

pub fn train(g: &Globals, config: &Path, manifest: Option<PathBuf>, out: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let manifest = manifest_path(manifest, &cfg)?;
    let grid = cfg.grid();
    let store = load_store(g, &cfg, &manifest, &grid.features, g.cache_dir(&cfg).as_deref())?;
    let labels = store.get(&grid.features[0])?.labels();
    let (j, k) = cfg.plan.sizes(labels.len());
    let plan = make_fold_plan(&labels, j, k, cfg.plan.inner_splits, g.seed)?;
    info!("{} outer folds of {j} test patients, {} inner splits of {k}", plan.n_outer(), plan.outer[0].inner.len());
    let cv = CvConfig { seed: g.seed, smote: cfg.smote, workers: g.workers, budget: cfg.budget, checkpoint: cfg.checkpoint.clone() };
    let res = run_nested_cv(&store, &grid, &plan, &cv)?;
    create_dir(out)?;
    write_json(&out.join("plan.json"), &plan)?;
    write_run(out, g.seed, &res)?;
    print_summary(&res);
    Ok(())
}

fn load_deployment(run: &Path) -> Result<Deployment, CliError> {
    let file: DeploymentFile = read_json(&run.join("deployment.json"))?;
    let models = file.models.iter().map(|p| load_model(run.join(p))).collect::<Result<_, _>>()?;
    Ok(Deployment { feature: file.feature, score_function: file.score_function, gamma_ee: file.gamma_ee, decision_threshold: file.decision_threshold, models })
}

pub fn evaluate(g: &Globals, run: &Path, manifest: &Path, out: &Path) -> Result<(), CliError> {
    let dep = load_deployment(run)?;
    let records = load_records(manifest)?;
    let corpus = AudioCorpus::load(&records, &g.trim(TrimConfig::default()))?;
    let ds: Arc<Dataset> = Arc::new(corpus.extract(&dep.feature, g.cache_dir.as_deref())?);
    let report = evaluate_external(&dep, &ds)?;
    create_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    write_roc(&out.join("roc.csv"), &report)?;
    write_rows(&out.join("results.csv"), &[Row::from_report("external", &report)])?;
    println!(
        "{} patients: AUC {:.4}, sensitivity {:.4}, specificity {:.4}, accuracy {:.4}",
        report.n_patients, report.auc, report.sensitivity, report.specificity, report.accuracy
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SfsOutput<'a> {
    trace: &'a [coughnet::selection::SfsStep],
    best_auc: Option<f64>,
    best_subset: Vec<&'a str>,
    skipped: Vec<&'a str>,
}

pub fn run_sfs(g: &Globals, config: &Path, manifest: Option<PathBuf>, out: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let manifest = manifest_path(manifest, &cfg)?;
    let feature = &cfg.features[0];
    let spec = cfg.sfs.model.clone().unwrap_or_else(|| cfg.grid().models[0].clone());
    let store = load_store(g, &cfg, &manifest, std::slice::from_ref(feature), g.cache_dir(&cfg).as_deref())?;
    let ds = store.get(feature)?;
    let labels = ds.labels();
    let splits = make_inner_splits(&labels, cfg.sfs.dev_size(labels.len()), cfg.sfs.splits, g.seed)?;
    let sfs_cfg = SfsConfig { max_dims: cfg.sfs.max_dims, score_function: cfg.sfs.score_function, seed: g.seed, smote: cfg.smote, workers: g.workers };
    let res = sfs(&ds, &spec, &splits, &sfs_cfg)?;
    create_dir(out)?;
    res.save_csv(&out.join("sfs_trace.csv"))?;
    let names = ds.dim_names();
    let name = |d: &usize| names[*d].as_str();
    let best = res.best_subset();
    write_json(
        &out.join("sfs.json"),
        &SfsOutput { trace: &res.trace, best_auc: res.best_auc(), best_subset: best.iter().map(name).collect(), skipped: res.skipped.iter().map(name).collect() },
    )?;
    match res.best_auc() {
        Some(a) => println!("best development AUC {a:.4} with {} of {} dims: {}", best.len(), names.len(), best.iter().map(name).collect::<Vec<_>>().join(", ")),
        None => println!("every candidate diverged; no dims selected"),
    }
    Ok(())
}

/// Tables from result CSVs or run directories; with `out`, also collects
/// every ROC and SFS curve next to the combined table.
pub fn report(inputs: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let tag = input.file_name().map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned());
            rows.extend(read_rows(&input.join("results.csv"))?.into_iter().map(|r| Row { name: format!("{tag}/{}", r.name), ..r }));
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input).map_err(CliError::io(input))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
            entries.sort();
            for p in entries {
                let file = p.file_name().unwrap().to_string_lossy().into_owned();
                if file.ends_with(".csv") && (file.starts_with("roc") || file.starts_with("sfs")) {
                    curves.push((p, format!("{tag}_{file}")));
                }
            }
        } else {
            rows.extend(read_rows(input)?);
        }
    }
    render(std::io::stdout().lock(), &rows).map_err(CliError::io(Path::new("<stdout>")))?;
    if let Some(out) = out {
        create_dir(out)?;
        write_rows(&out.join("report.csv"), &rows)?;
        for (src, name) in curves {
            let dst = out.join(name);
            std::fs::copy(&src, &dst).map_err(CliError::io(&src))?;
        }
    }
    Ok(())
}

pub fn synth_demo(g: &Globals, out: &Path) -> Result<(), CliError> {
    create_dir(out)?;
    let demo = run_synth_demo(&out.join("corpus"), g.seed, g.workers)?;
    write_run(out, g.seed, &demo.cv)?;
    let roc = out.join("roc.csv");
    demo.pooled_roc.write_csv(std::fs::File::create(&roc).map_err(CliError::io(&roc))?)?;
    let auc = demo.cv.summary.mean_auc;
    println!("mean outer AUC: {auc:.4} (pooled {:.4}); ROC written to {}", demo.pooled_roc.auc, roc.display());
    if auc < DEMO_TARGET_AUC {
        return Err(CliError::BelowTarget { auc, required: DEMO_TARGET_AUC });
    }
    Ok(())
}
