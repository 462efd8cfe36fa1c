//! Nested leave-p-out partitions of patients.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::CrossvalError;
use crate::numerics::{derive_seed, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerSplit {
    pub dev: Vec<String>,
    pub fit: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OuterFold {
    pub test: Vec<String>,
    pub train: Vec<String>,
    pub inner: Vec<InnerSplit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    /// Test patients per outer fold.
    pub j: usize,
    /// Development patients per inner split.
    pub k: usize,
    pub outer: Vec<OuterFold>,
}

pub const DEFAULT_INNER_SPLITS: usize = 4;

/// Shuffles each class with `rng` and interleaves them so that every prefix
/// holds (as nearly as possible) the overall class proportions.
fn stratified_order(patients: &[(String, bool)], rng: &mut Rng) -> Vec<String> {
    let mut pos: Vec<&String> = patients.iter().filter(|p| p.1).map(|p| &p.0).collect();
    let mut neg: Vec<&String> = patients.iter().filter(|p| !p.1).map(|p| &p.0).collect();
    rng.shuffle(&mut pos);
    rng.shuffle(&mut neg);
    let key = |i: usize, n: usize| (2 * i + 1) as f64 / (2 * n) as f64;
    let mut keyed: Vec<(f64, u8, &String)> = pos.iter().enumerate().map(|(i, id)| (key(i, pos.len()), 0, *id)).collect();
    keyed.extend(neg.iter().enumerate().map(|(i, id)| (key(i, neg.len()), 1, *id)));
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, id)| id.clone()).collect()
}

fn inner_splits(patients: &[(String, bool)], k: usize, n_split: usize, seed: u64) -> Vec<InnerSplit> {
    let order = stratified_order(patients, &mut Rng::new(seed));
    (0..n_split)
        .map(|s| {
            let dev = order[s * k..(s + 1) * k].to_vec();
            let fit = order[..s * k].iter().chain(&order[(s + 1) * k..]).cloned().collect();
            InnerSplit { dev, fit }
        })
        .collect()
}

/// `min(n_split, floor((N - 1) / K))` disjoint, stratified development sets of
/// `K` patients, each paired with every remaining patient as the fit side.
pub fn make_inner_splits(patients: &[(String, bool)], k: usize, n_split: usize, seed: u64) -> Result<Vec<InnerSplit>, CrossvalError> {
    let n = patients.len();
    if k == 0 || n_split == 0 || k >= n {
        return Err(CrossvalError::InvalidPlan(format!("need 0 < K < N and at least one split, got K={k}, N={n}, splits={n_split}")));
    }
    let mut ids = HashSet::new();
    if let Some(dup) = patients.iter().find(|p| !ids.insert(&p.0)) {
        return Err(CrossvalError::InvalidPlan(format!("patient {} listed twice", dup.0)));
    }
    Ok(inner_splits(patients, k, n_split.min((n - 1) / k), seed))
}

/// Builds `floor(N / J)` disjoint outer test sets from a seeded, class-
/// stratified shuffle of `patients` (`(id, is_positive)`). The `N mod J`
/// leftover patients are only ever used for training. Each outer fold gets
/// `min(n_inner, floor((N - J) / K))` disjoint development sets of `K`
/// patients drawn from its training side.
pub fn make_fold_plan(patients: &[(String, bool)], j: usize, k: usize, n_inner: usize, seed: u64) -> Result<FoldPlan, CrossvalError> {
    let n = patients.len();
    if j == 0 || k == 0 || n_inner == 0 {
        return Err(CrossvalError::InvalidPlan(format!("J, K and the inner split count must be positive (J={j}, K={k}, inner={n_inner})")));
    }
    if j + k >= n {
        return Err(CrossvalError::InvalidPlan(format!("need J + K < N, got J={j}, K={k}, N={n}")));
    }
    let mut ids = HashSet::new();
    if let Some(dup) = patients.iter().find(|p| !ids.insert(&p.0)) {
        return Err(CrossvalError::InvalidPlan(format!("patient {} listed twice", dup.0)));
    }
    let label_of = |id: &String| patients.iter().find(|p| &p.0 == id).map(|p| p.1).unwrap();

    let order = stratified_order(patients, &mut Rng::new(derive_seed(seed, &[0])));
    let n_outer = n / j;
    let n_split = n_inner.min((n - j) / k);
    let mut outer = Vec::with_capacity(n_outer);
    for f in 0..n_outer {
        let test: Vec<String> = order[f * j..(f + 1) * j].to_vec();
        let train: Vec<String> = order[..f * j].iter().chain(&order[(f + 1) * j..]).cloned().collect();
        let labelled: Vec<(String, bool)> = train.iter().map(|id| (id.clone(), label_of(id))).collect();
        let inner = inner_splits(&labelled, k, n_split, derive_seed(seed, &[1, f as u64]));
        outer.push(OuterFold { test, train, inner });
    }
    Ok(FoldPlan { seed, j, k, outer })
}

fn disjoint(a: &[String], b: &[String]) -> Option<String> {
    let set: HashSet<&String> = a.iter().collect();
    b.iter().find(|id| set.contains(id)).cloned()
}

/// Errors with [`CrossvalError::Leakage`] if any pair of sets overlaps.
pub fn assert_disjoint(sets: &[(&str, &[String])]) -> Result<(), CrossvalError> {
    for (i, (na, a)) in sets.iter().enumerate() {
        let mut seen = HashSet::new();
        if let Some(dup) = a.iter().find(|id| !seen.insert(*id)) {
            return Err(CrossvalError::Leakage(format!("patient {dup} appears twice in the {na} set")));
        }
        for (nb, b) in &sets[i + 1..] {
            if let Some(id) = disjoint(a, b) {
                return Err(CrossvalError::Leakage(format!("patient {id} is in both the {na} and {nb} sets")));
            }
        }
    }
    Ok(())
}

impl FoldPlan {
    pub fn n_outer(&self) -> usize {
        self.outer.len()
    }

    /// Checks every separation guarantee: per fold, test/fit/dev are pairwise
    /// disjoint and `fit ∪ dev = train`; outer test sets are pairwise disjoint.
    pub fn validate(&self) -> Result<(), CrossvalError> {
        let mut all_tests: HashSet<&String> = HashSet::new();
        for (f, fold) in self.outer.iter().enumerate() {
            assert_disjoint(&[("test", &fold.test), ("train", &fold.train)])?;
            for t in &fold.test {
                if !all_tests.insert(t) {
                    return Err(CrossvalError::Leakage(format!("patient {t} is tested in more than one outer fold")));
                }
            }
            for split in &fold.inner {
                assert_disjoint(&[("test", &fold.test), ("fit", &split.fit), ("dev", &split.dev)])?;
                if split.fit.len() + split.dev.len() != fold.train.len() || disjoint(&fold.test, &split.fit).is_some() {
                    return Err(CrossvalError::Leakage(format!("outer fold {f}: inner split does not partition the training side")));
                }
                let train: HashSet<&String> = fold.train.iter().collect();
                if let Some(id) = split.fit.iter().chain(&split.dev).find(|id| !train.contains(id)) {
                    return Err(CrossvalError::Leakage(format!("outer fold {f}: patient {id} is outside the training side")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cohort(n: usize, n_pos: usize) -> Vec<(String, bool)> {
        (0..n).map(|i| (format!("p{i:04}"), i < n_pos)).collect()
    }

    #[test]
    fn full_cohort_sizes_give_five_folds() {
        let plan = make_fold_plan(&cohort(1171, 92), 234, 187, 4, 1).unwrap();
        assert_eq!(plan.n_outer(), 5);
        assert!(plan.outer.iter().all(|f| f.test.len() == 234 && f.train.len() == 937 && f.inner.len() == 4));
        plan.validate().unwrap();
    }

    #[test]
    fn small_cohort_covers_everyone() {
        let plan = make_fold_plan(&cohort(10, 4), 2, 2, 4, 3).unwrap();
        assert_eq!(plan.n_outer(), 5);
        let mut tested: Vec<&String> = plan.outer.iter().flat_map(|f| &f.test).collect();
        tested.sort();
        tested.dedup();
        assert_eq!(tested.len(), 10);
    }

    #[test]
    fn remainder_only_trains() {
        let plan = make_fold_plan(&cohort(11, 5), 2, 2, 2, 3).unwrap();
        assert_eq!(plan.n_outer(), 5);
        let tested: HashSet<&String> = plan.outer.iter().flat_map(|f| &f.test).collect();
        assert_eq!(tested.len(), 10);
        let untested: Vec<_> = cohort(11, 5).into_iter().filter(|p| !tested.contains(&p.0)).collect();
        assert_eq!(untested.len(), 1);
        assert!(plan.outer.iter().all(|f| f.train.contains(&untested[0].0)));
    }

    #[test]
    fn stratified_test_sets() {
        let plan = make_fold_plan(&cohort(60, 30), 12, 10, 4, 9).unwrap();
        for f in &plan.outer {
            let pos = f.test.iter().filter(|id| id.as_str() < "p0030").count();
            assert_eq!(pos, 6);
        }
    }

    #[test]
    fn infeasible_sizes() {
        assert!(matches!(make_fold_plan(&cohort(10, 5), 5, 5, 1, 0), Err(CrossvalError::InvalidPlan(_))));
        assert!(make_fold_plan(&cohort(10, 5), 0, 2, 1, 0).is_err());
        let mut dup = cohort(10, 5);
        dup[3].0 = dup[4].0.clone();
        assert!(make_fold_plan(&dup, 2, 2, 1, 0).is_err());
    }

    #[test]
    fn tampered_plan_is_rejected() {
        let mut plan = make_fold_plan(&cohort(20, 8), 4, 3, 2, 5).unwrap();
        let leaked = plan.outer[0].test[0].clone();
        plan.outer[0].inner[1].fit.push(leaked);
        assert!(matches!(plan.validate(), Err(CrossvalError::Leakage(_))));
    }

    #[test]
    fn seed_changes_partition() {
        let a = make_fold_plan(&cohort(30, 10), 5, 5, 2, 1).unwrap();
        let b = make_fold_plan(&cohort(30, 10), 5, 5, 2, 1).unwrap();
        let c = make_fold_plan(&cohort(30, 10), 5, 5, 2, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn random_plans_are_clean(n in 3usize..120, jf in 0.05f64..0.5, kf in 0.05f64..0.5, inner in 1usize..6, seed in any::<u64>()) {
            let j = ((n as f64 * jf) as usize).max(1);
            let k = ((n as f64 * kf) as usize).max(1);
            prop_assume!(j + k < n);
            let plan = make_fold_plan(&cohort(n, n / 3), j, k, inner, seed).unwrap();
            prop_assert!(plan.validate().is_ok());
            prop_assert_eq!(plan.n_outer(), n / j);
            for f in &plan.outer {
                prop_assert_eq!(f.test.len(), j);
                prop_assert_eq!(f.train.len(), n - j);
                prop_assert_eq!(f.inner.len(), inner.min((n - j) / k));
                for s in &f.inner {
                    prop_assert_eq!(s.dev.len(), k);
                }
            }
        }
    }
}
