//! ROC analysis, equal-error-rate thresholds and patient-level COVID indexes.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("scores contain only one class ({positives} positive, {negatives} negative)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("non-finite score {0}")]
    NonFiniteScore(f64),
    #[error("export failed: {0}")]
    Export(String),
}

/// Thresholds may hold the `+inf` sentinel, which JSON cannot represent.
mod inf_as_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let reprs: Vec<Repr> = v
            .iter()
            .map(|&x| if x.is_finite() { Repr::Num(x) } else { Repr::Str(super::fmt_threshold(x)) })
            .collect();
        reprs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| match r {
                Repr::Num(x) => Ok(x),
                Repr::Str(s) => s.parse::<f64>().map_err(serde::de::Error::custom),
            })
            .collect()
    }
}

fn fmt_threshold(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Descending; the first entry is the `+inf` sentinel giving the (0, 0) point.
    #[serde(with = "inf_as_string")]
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    /// Positives scoring at or above each threshold.
    pub tp: Vec<usize>,
    /// Negatives scoring at or above each threshold.
    pub fp: Vec<usize>,
    pub positives: usize,
    pub negatives: usize,
    pub auc: f64,
}

impl RocCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// `|FPR - FNR|` at point `i`, scaled by `P * N` so it stays an exact integer.
    fn scaled_gap(&self, i: usize) -> u128 {
        let fp_p = self.fp[i] as u128 * self.positives as u128;
        let fn_n = (self.positives - self.tp[i]) as u128 * self.negatives as u128;
        fp_p.abs_diff(fn_n)
    }

    /// `|FPR - FNR|` at point `i`.
    pub fn error_gap(&self, i: usize) -> f64 {
        self.scaled_gap(i) as f64 / (self.positives as f64 * self.negatives as f64)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| EvalError::Export(e.to_string());
        out.write_record(["threshold", "fpr", "tpr"]).map_err(err)?;
        for i in 0..self.len() {
            out.write_record([fmt_threshold(self.thresholds[i]), self.fpr[i].to_string(), self.tpr[i].to_string()])
                .map_err(err)?;
        }
        out.flush().map_err(|e| EvalError::Export(e.to_string()))
    }
}

/// Builds the ROC curve by sweeping every distinct score as a threshold
/// (score `>= t` predicts positive). The AUC is the Mann–Whitney statistic
/// with ties counted as one half, which equals the trapezoidal area.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<RocCurve, EvalError> {
    if let Some(&(s, _)) = scores.iter().find(|(s, _)| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(s));
    }
    let positives = scores.iter().filter(|(_, l)| *l).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::DegenerateLabels { positives, negatives });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (vec![0], vec![0]);
    // twice the number of (pos, neg) pairs the positive wins, ties add 1
    let mut wins2: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let (mut gp, mut gn) = (0usize, 0usize);
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        let fp_before = *fp.last().unwrap();
        let negs_below = negatives - fp_before - gn;
        wins2 += gp as u128 * (2 * negs_below + gn) as u128;
        thresholds.push(t);
        tp.push(tp.last().unwrap() + gp);
        fp.push(fp_before + gn);
    }
    let auc = wins2 as f64 / (2.0 * positives as f64 * negatives as f64);
    Ok(RocCurve {
        fpr: fp.iter().map(|&f| f as f64 / negatives as f64).collect(),
        tpr: tp.iter().map(|&t| t as f64 / positives as f64).collect(),
        thresholds,
        tp,
        fp,
        positives,
        negatives,
        auc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Point minimising `|FPR - FNR|` among the swept thresholds (the `+inf`
/// sentinel excluded); ties go to the larger threshold.
pub fn eer_point(roc: &RocCurve) -> EerPoint {
    let start = 1.min(roc.len() - 1);
    let mut best = start;
    for i in start..roc.len() {
        if roc.scaled_gap(i) < roc.scaled_gap(best) {
            best = i;
        }
    }
    EerPoint { threshold: roc.thresholds[best], fpr: roc.fpr[best], fnr: 1.0 - roc.tpr[best] }
}

pub fn eer_threshold(roc: &RocCurve) -> f64 {
    eer_point(roc).threshold
}

/// Mean of per-segment probabilities: the per-cough estimate `P̂`.
pub fn mean_probability(probs: &[f64]) -> f64 {
    probs.iter().sum::<f64>() / probs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScoreFunction {
    /// Fraction of a patient's coughs with `P̂ >= γ`.
    I1,
    /// Flat mean over all of a patient's segment probabilities.
    I2,
}

impl ScoreFunction {
    pub const ALL: [ScoreFunction; 2] = [ScoreFunction::I1, ScoreFunction::I2];
}

impl std::fmt::Display for ScoreFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScoreFunction::I1 => "I1",
            ScoreFunction::I2 => "I2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientScore {
    pub patient_id: String,
    pub covid_i1: f64,
    pub covid_i2: f64,
    /// Cough count.
    pub n1: usize,
    /// Segment count.
    pub n2: usize,
    pub positive: bool,
}

impl PatientScore {
    pub fn index(&self, f: ScoreFunction) -> f64 {
        match f {
            ScoreFunction::I1 => self.covid_i1,
            ScoreFunction::I2 => self.covid_i2,
        }
    }
}

/// `per_segment_probs[c]` holds the segment probabilities of cough `c`;
/// `P̂` per cough is their mean.
pub fn covid_indexes(
    patient_id: &str,
    positive: bool,
    per_segment_probs: &[Vec<f64>],
    gamma: f64,
) -> Result<PatientScore, EvalError> {
    if per_segment_probs.is_empty() || per_segment_probs.iter().any(Vec::is_empty) {
        return Err(EvalError::EmptyInput(format!("patient {patient_id} has no scored coughs")));
    }
    let phat: Vec<f64> = per_segment_probs.iter().map(|p| mean_probability(p)).collect();
    covid_indexes_from(patient_id, positive, &phat, per_segment_probs.iter().flatten().copied(), gamma)
}

/// Variant taking per-cough `P̂` and a flat segment stream separately.
pub fn covid_indexes_from(
    patient_id: &str,
    positive: bool,
    per_cough_phat: &[f64],
    segment_probs: impl IntoIterator<Item = f64>,
    gamma: f64,
) -> Result<PatientScore, EvalError> {
    if per_cough_phat.is_empty() {
        return Err(EvalError::EmptyInput(format!("patient {patient_id} has no scored coughs")));
    }
    let n1 = per_cough_phat.len();
    let hits = per_cough_phat.iter().filter(|&&p| p >= gamma).count();
    let (mut n2, mut sum) = (0usize, 0.0);
    for p in segment_probs {
        n2 += 1;
        sum += p;
    }
    if n2 == 0 {
        return Err(EvalError::EmptyInput(format!("patient {patient_id} has no segment probabilities")));
    }
    Ok(PatientScore {
        patient_id: patient_id.to_string(),
        covid_i1: hits as f64 / n1 as f64,
        covid_i2: sum / n2 as f64,
        n1,
        n2,
        positive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

impl OperatingPoint {
    pub fn at(scores: &[(f64, bool)], threshold: f64) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for &(s, pos) in scores {
            match (s >= threshold, pos) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        OperatingPoint {
            threshold,
            tp,
            fp,
            tn,
            fn_,
            sensitivity: ratio(tp, fn_),
            specificity: ratio(tn, fp),
            accuracy: ratio(tp + tn, fp + fn_),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub score_function: ScoreFunction,
    pub decision_threshold: f64,
    pub auc: f64,
    /// Patient-level equal-error threshold on the chosen index.
    pub gamma_ee: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub at_decision: OperatingPoint,
    pub at_eer: OperatingPoint,
    pub at_half: OperatingPoint,
    pub n_patients: usize,
    pub roc: RocCurve,
    pub patients: Vec<PatientScore>,
}

/// Patient-level report: a patient is predicted positive iff its chosen
/// index is `>= decision_threshold`.
pub fn report(patients: &[PatientScore], score_function: ScoreFunction, decision_threshold: f64) -> Result<EvalReport, EvalError> {
    let scores: Vec<(f64, bool)> = patients.iter().map(|p| (p.index(score_function), p.positive)).collect();
    let roc = roc_auc(&scores)?;
    let gamma_ee = eer_threshold(&roc);
    let at_decision = OperatingPoint::at(&scores, decision_threshold);
    Ok(EvalReport {
        score_function,
        decision_threshold,
        auc: roc.auc,
        gamma_ee,
        sensitivity: at_decision.sensitivity,
        specificity: at_decision.specificity,
        accuracy: at_decision.accuracy,
        at_decision,
        at_eer: OperatingPoint::at(&scores, gamma_ee),
        at_half: OperatingPoint::at(&scores, 0.5),
        n_patients: patients.len(),
        roc,
        patients: patients.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn pair_count_auc(scores: &[(f64, bool)]) -> f64 {
        let (mut twice, mut pairs) = (0u64, 0u64);
        for &(sp, lp) in scores {
            for &(sn, ln) in scores {
                if lp && !ln {
                    pairs += 1;
                    twice += if sp > sn { 2 } else if sp == sn { 1 } else { 0 };
                }
            }
        }
        twice as f64 / (2 * pairs) as f64
    }

    fn min_gap_sweep(scores: &[(f64, bool)]) -> f64 {
        let p = scores.iter().filter(|s| s.1).count() as f64;
        let n = scores.len() as f64 - p;
        scores
            .iter()
            .map(|&(t, _)| {
                let fp = scores.iter().filter(|s| !s.1 && s.0 >= t).count() as f64;
                let fnc = scores.iter().filter(|s| s.1 && s.0 < t).count() as f64;
                (fp / n - fnc / p).abs()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn perfect_separation() {
        let roc = roc_auc(&[(0.9, true), (0.8, true), (0.1, false), (0.2, false)]).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!((roc.fpr[0], roc.tpr[0]), (0.0, 0.0));
        assert_eq!((*roc.fpr.last().unwrap(), *roc.tpr.last().unwrap()), (1.0, 1.0));
        let e = eer_point(&roc);
        assert_eq!(e.fpr, e.fnr);
        assert!(e.threshold > 0.2 && e.threshold <= 0.8);
    }

    #[test]
    fn all_tied() {
        let roc = roc_auc(&[(0.3, true), (0.3, false), (0.3, true), (0.3, false)]).unwrap();
        assert_eq!(roc.auc, 0.5);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(roc_auc(&[(0.3, true), (0.5, true)]), Err(EvalError::DegenerateLabels { .. })));
        assert!(roc_auc(&[(f64::NAN, true), (0.5, false)]).is_err());
    }

    #[test]
    fn one_each() {
        let roc = roc_auc(&[(0.9, true), (0.1, false)]).unwrap();
        let e = eer_point(&roc);
        assert!(e.threshold > 0.1 && e.threshold <= 0.9);
        assert_eq!((e.fpr, e.fnr), (0.0, 0.0));
    }

    #[test]
    fn twelve_random_pairs() {
        let mut rng = Rng::new(12);
        let s: Vec<(f64, bool)> = (0..12).map(|i| ((rng.below(5) as f64) / 4.0, i % 3 == 0)).collect();
        assert_eq!(roc_auc(&s).unwrap().auc, pair_count_auc(&s));
    }

    #[test]
    fn overlapping_gaussians_eer_near_midpoint() {
        let mut rng = Rng::new(3);
        let mut s: Vec<(f64, bool)> = (0..1000).map(|_| (1.0 + rng.standard_normal(), true)).collect();
        s.extend((0..1000).map(|_| (-1.0 + rng.standard_normal(), false)));
        let roc = roc_auc(&s).unwrap();
        let e = eer_point(&roc);
        assert!(e.threshold.abs() < 0.15, "{e:?}");
        assert!((e.fpr - e.fnr).abs() <= 1.0 / 1000.0 + 1e-12);
        assert!((roc.error_gap(roc.thresholds.iter().position(|&t| t == e.threshold).unwrap()) - min_gap_sweep(&s)).abs() < 1e-12);
    }

    #[test]
    fn covid_index_examples() {
        let s = covid_indexes("p", true, &[vec![0.5]], 0.5).unwrap();
        assert_eq!(s.covid_i1, 1.0);
        let s = covid_indexes("p", true, &[vec![0.9], vec![0.1]], 0.5).unwrap();
        assert_eq!(s.covid_i1, 0.5);
        let s = covid_indexes("p", true, &[vec![0.2, 0.4, 0.9]], 0.5).unwrap();
        assert!((s.covid_i2 - 0.5).abs() < 1e-15);
        assert_eq!((s.n1, s.n2), (1, 3));
        assert!(covid_indexes("p", true, &[], 0.5).is_err());
    }

    #[test]
    fn i2_ignores_grouping() {
        let a = covid_indexes("p", false, &[vec![0.2, 0.4], vec![0.9, 0.3, 0.1]], 0.5).unwrap();
        let b = covid_indexes("p", false, &[vec![0.2], vec![0.4, 0.9, 0.3], vec![0.1]], 0.5).unwrap();
        assert!((a.covid_i2 - b.covid_i2).abs() < 1e-15);
    }

    fn patient(id: &str, idx: f64, positive: bool) -> PatientScore {
        PatientScore { patient_id: id.into(), covid_i1: idx, covid_i2: idx, n1: 1, n2: 1, positive }
    }

    #[test]
    fn report_examples() {
        let ps = [patient("a", 0.8, true), patient("b", 0.6, true), patient("c", 0.4, false), patient("d", 0.2, false)];
        let r = report(&ps, ScoreFunction::I2, 0.5).unwrap();
        assert_eq!((r.sensitivity, r.specificity, r.accuracy, r.auc), (1.0, 1.0, 1.0, 1.0));
        assert_eq!((r.at_eer.sensitivity, r.at_eer.specificity), (1.0, 1.0));
        let json = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn roc_csv_export() {
        let roc = roc_auc(&[(0.9, true), (0.1, false)]).unwrap();
        let mut buf = Vec::new();
        roc.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "threshold,fpr,tpr\ninf,0,0\n0.9,0,1\n0.1,1,1\n");
    }

    fn labelled_scores() -> impl Strategy<Value = Vec<(f64, bool)>> {
        prop::collection::vec(((0u8..20).prop_map(|v| v as f64 / 19.0), any::<bool>()), 2..50)
            .prop_filter("both classes", |v| v.iter().any(|s| s.1) && v.iter().any(|s| !s.1))
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(s in labelled_scores()) {
            let roc = roc_auc(&s).unwrap();
            prop_assert_eq!(roc.auc, pair_count_auc(&s));
            prop_assert!(roc.fpr.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(roc.tpr.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn eer_is_global_minimum(s in labelled_scores()) {
            let roc = roc_auc(&s).unwrap();
            let e = eer_point(&roc);
            prop_assert!(((e.fpr - e.fnr).abs() - min_gap_sweep(&s)).abs() < 1e-12);
        }

        #[test]
        fn auc_monotone_invariant(s in labelled_scores()) {
            let t: Vec<(f64, bool)> = s.iter().map(|&(x, l)| ((3.0 * x).exp() - 7.0, l)).collect();
            prop_assert_eq!(roc_auc(&s).unwrap().auc, roc_auc(&t).unwrap().auc);
        }
    }
}
