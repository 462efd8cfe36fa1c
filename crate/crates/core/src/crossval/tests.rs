use super::*;
use crate::audio_io::Label;
use crate::features::FeatureMatrix;
use crate::models::{Family, LrParams};

/// Positives have dimension 0 shifted by `shift`; everything else is noise.
fn synthetic_dataset(n: usize, n_pos: usize, shift: f64, seed: u64, config: FeatureConfig) -> Dataset {
    let mut rng = Rng::new(seed);
    let (s, d) = (4, 3);
    let patients = (0..n)
        .map(|i| {
            let positive = i < n_pos;
            let id = format!("p{i:03}");
            let coughs = (0..1 + i % 2)
                .map(|c| {
                    let data = (0..s * d).map(|k| rng.standard_normal() + if positive && k % d == 0 { shift } else { 0.0 }).collect();
                    FeatureMatrix {
                        values: Matrix::from_vec(s, d, data).unwrap(),
                        dim_names: vec!["a".into(), "b".into(), "c".into()],
                        patient_id: id.clone(),
                        cough_id: format!("{id}/{c}"),
                        label: if positive { Label::Positive } else { Label::Negative },
                    }
                })
                .collect();
            PatientFeatures { id, positive, coughs }
        })
        .collect();
    Dataset::new(Some(config), patients).unwrap()
}

fn feature_cfg() -> FeatureConfig {
    FeatureConfig::new(13, 1024, 4)
}

fn setup(n: usize, n_pos: usize, shift: f64) -> (FeatureStore, Dataset) {
    let ds = synthetic_dataset(n, n_pos, shift, 7, feature_cfg());
    let mut store = FeatureStore::default();
    store.insert(ds.clone()).unwrap();
    (store, ds)
}

fn lr(epochs: usize) -> ModelSpec {
    ModelSpec::LR(LrParams { epochs, ..Default::default() })
}

#[test]
fn single_point_grid_is_plain_train_test() {
    let (store, ds) = setup(20, 10, 2.0);
    let plan = make_fold_plan(&ds.labels(), 4, 4, 2, 3).unwrap();
    let grid = SearchGrid::single(feature_cfg(), lr(20), ScoreFunction::I2);
    let cfg = CvConfig { seed: 5, ..Default::default() };
    let res = run_nested_cv(&store, &grid, &plan, &cfg).unwrap();
    assert_eq!(res.folds.len(), 5);
    for f in &res.folds {
        let again = train_on(&ds, &plan.outer[f.fold].train, &grid.models[0], &cfg.smote, f.train_seed).unwrap();
        assert_eq!(again.model.params(), f.model.params());
        let probs = score_patients(&ds, &f.test_patients, &[&f.model]).unwrap();
        let direct = report(&patient_scores(&probs, f.chosen.gamma_ee).unwrap(), ScoreFunction::I2, f.chosen.gamma_ee).unwrap();
        assert_eq!(direct.auc, f.report.auc);
        assert_eq!(direct.patients.len(), 4);
    }
    assert!(res.summary.mean_auc > 0.8, "{:?}", res.summary);
}

#[test]
fn results_do_not_depend_on_workers() {
    let (store, ds) = setup(18, 8, 1.0);
    let plan = make_fold_plan(&ds.labels(), 6, 3, 2, 1).unwrap();
    let grid = SearchGrid {
        features: vec![feature_cfg()],
        models: vec![lr(5), ModelSpec::default_for(Family::SVM).with_schedule(5, 16, 0.01)],
        score_functions: ScoreFunction::ALL.to_vec(),
    };
    let a = run_nested_cv(&store, &grid, &plan, &CvConfig { workers: Some(1), ..Default::default() }).unwrap();
    let b = run_nested_cv(&store, &grid, &plan, &CvConfig { workers: Some(3), ..Default::default() }).unwrap();
    for (x, y) in a.folds.iter().zip(&b.folds) {
        assert_eq!(x.chosen, y.chosen);
        assert_eq!(x.report, y.report);
        assert_eq!(x.inner_scores, y.inner_scores);
    }
}

#[test]
fn ties_pick_smallest_coordinates() {
    let (store, ds) = setup(16, 8, 3.0);
    let plan = make_fold_plan(&ds.labels(), 4, 4, 2, 2).unwrap();
    // identical specs give identical dev scores
    let grid = SearchGrid { features: vec![feature_cfg()], models: vec![lr(10), lr(10)], score_functions: vec![ScoreFunction::I2] };
    let res = run_nested_cv(&store, &grid, &plan, &CvConfig::default()).unwrap();
    for f in &res.folds {
        let top = f.inner_scores[0].mean_dev_auc;
        if f.inner_scores[1].mean_dev_auc == top {
            assert_eq!(f.chosen.model_index, 0);
        }
    }
}

#[test]
fn checkpoint_resume_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.log");
    let (store, ds) = setup(16, 6, 1.5);
    let plan = make_fold_plan(&ds.labels(), 4, 3, 3, 8).unwrap();
    let grid = SearchGrid { features: vec![feature_cfg()], models: vec![lr(5), lr(8)], score_functions: ScoreFunction::ALL.to_vec() };
    let cfg = CvConfig { checkpoint: Some(path.clone()), ..Default::default() };
    let full = run_nested_cv(&store, &grid, &plan, &cfg).unwrap();
    assert_eq!(full.units_resumed, 0);
    let total = full.units_evaluated;

    // keep the header and 7 records, then a torn line
    let text = std::fs::read_to_string(&path).unwrap();
    let mut kept: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
    kept.push_str("{\"fold\":0,\"spl");
    std::fs::write(&path, kept).unwrap();

    let resumed = run_nested_cv(&store, &grid, &plan, &cfg).unwrap();
    assert_eq!(resumed.units_resumed, 7);
    assert_eq!(resumed.units_evaluated, total - 7);
    for (x, y) in full.folds.iter().zip(&resumed.folds) {
        assert_eq!(x.chosen, y.chosen);
        assert_eq!(x.report, y.report);
    }
    // a third run has nothing left to do
    let again = run_nested_cv(&store, &grid, &plan, &cfg).unwrap();
    assert_eq!(again.units_evaluated, 0);

    let other = CvConfig { seed: 99, ..cfg };
    assert!(matches!(run_nested_cv(&store, &grid, &plan, &other), Err(CrossvalError::Checkpoint { .. })));
}

#[test]
fn leakage_aborts() {
    let (store, ds) = setup(16, 8, 1.0);
    let mut plan = make_fold_plan(&ds.labels(), 4, 4, 2, 2).unwrap();
    let dup = plan.outer[1].test[0].clone();
    plan.outer[1].train.push(dup);
    let grid = SearchGrid::single(feature_cfg(), lr(2), ScoreFunction::I1);
    assert!(matches!(run_nested_cv(&store, &grid, &plan, &CvConfig::default()), Err(CrossvalError::Leakage(_))));
}

#[test]
fn diverging_points_are_skipped() {
    let (store, ds) = setup(16, 8, 2.0);
    let plan = make_fold_plan(&ds.labels(), 4, 4, 2, 2).unwrap();
    let bad = ModelSpec::LR(LrParams { strength: 1e-7, learning_rate: 1.0, ..Default::default() });
    let grid = SearchGrid { features: vec![feature_cfg()], models: vec![bad.clone(), lr(10)], score_functions: vec![ScoreFunction::I2] };
    let res = run_nested_cv(&store, &grid, &plan, &CvConfig::default()).unwrap();
    assert!(res.folds.iter().all(|f| f.chosen.model_index == 1));
    let all_bad = SearchGrid::single(feature_cfg(), bad, ScoreFunction::I2);
    assert!(matches!(run_nested_cv(&store, &all_bad, &plan, &CvConfig::default()), Err(CrossvalError::SearchFailed { fold: 0 })));
}

#[test]
fn smote_only_sees_fit_patients() {
    let (_, ds) = setup(20, 5, 1.0);
    let fit_ids: Vec<String> = ds.labels().into_iter().map(|p| p.0).take(16).collect();
    let coughs = |pos: bool| fit_ids.iter().map(|id| ds.get(id).unwrap()).filter(|p| p.positive == pos).map(|p| p.coughs.len()).sum::<usize>();
    let out = train_on(&ds, &fit_ids, &lr(2), &SmoteConfig::default(), 1).unwrap();
    assert_eq!(out.synthetic, coughs(false) - coughs(true));
}

#[test]
fn budget_subsamples_deterministically() {
    let grid = SearchGrid { features: vec![feature_cfg(); 4], models: vec![lr(1); 5], score_functions: ScoreFunction::ALL.to_vec() };
    let a = grid.pairs(Some(6), 3);
    assert_eq!(a.len(), 6);
    assert_eq!(a, grid.pairs(Some(6), 3));
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(grid.pairs(None, 3).len(), 20);
}

#[test]
fn external_evaluation() {
    let (store, ds) = setup(20, 10, 2.0);
    let plan = make_fold_plan(&ds.labels(), 4, 4, 2, 3).unwrap();
    let grid = SearchGrid::single(feature_cfg(), lr(20), ScoreFunction::I2);
    let res = run_nested_cv(&store, &grid, &plan, &CvConfig::default()).unwrap();
    let dep = res.deployment();
    assert_eq!(dep.models.len(), 5);

    let ext = synthetic_dataset(21, 8, 2.0, 99, feature_cfg());
    let rep = evaluate_external(&dep, &ext).unwrap();
    assert_eq!(rep.n_patients, 21);
    assert_eq!(rep.patients.iter().filter(|p| p.positive).count(), 8);

    let own = evaluate_external(&dep, &ds).unwrap();
    let best_dev = res.folds.iter().map(|f| f.chosen.mean_dev_auc).fold(0.0, f64::max);
    assert!(own.auc >= best_dev - 0.1, "{} vs {best_dev}", own.auc);

    let wrong = synthetic_dataset(6, 3, 2.0, 1, FeatureConfig::new(26, 1024, 4));
    assert!(matches!(evaluate_external(&dep, &wrong), Err(CrossvalError::Model(ModelError::Shape { .. }))));
    assert!(matches!(Dataset::new(Some(feature_cfg()), vec![]), Err(CrossvalError::EmptyInput(_))));
}
