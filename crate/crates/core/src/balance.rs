//! SMOTE oversampling of the minority class.
//!
//! For each minority sample `x`, taken in index order and cycling as needed,
//! `n_candidates` other minority samples are drawn at random, the closest of
//! them becomes `x_nn`, and a synthetic point `x + u * (x_nn - x)` is emitted
//! with `u ~ U(0, 1)`. Note this samples candidates first and then takes the
//! nearest, rather than searching the k nearest neighbours of `x`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("SMOTE needs at least 2 minority samples, got {0}")]
    InsufficientMinority(usize),
    #[error("invalid SMOTE configuration: {0}")]
    InvalidConfig(String),
    #[error("minority vectors have differing lengths ({0} vs {1})")]
    DimensionMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoteConfig {
    pub n_candidates: usize,
    /// Desired minority/majority ratio after oversampling.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self { n_candidates: 5, target_ratio: 1.0, seed: 0 }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<(), BalanceError> {
        if self.n_candidates == 0 {
            return Err(BalanceError::InvalidConfig("n_candidates must be at least 1".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(BalanceError::InvalidConfig(format!("target_ratio {} outside (0, 1]", self.target_ratio)));
        }
        Ok(())
    }
}

/// A generated sample and the minority indices it interpolates between.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub values: Vec<f64>,
    pub parent: usize,
    pub neighbor: usize,
    pub u: f64,
}

/// `x + u * (x_nn - x)`
pub fn interpolate(x: &[f64], x_nn: &[f64], u: f64) -> Vec<f64> {
    x.iter().zip(x_nn).map(|(a, b)| a + u * (b - a)).collect()
}

/// How many synthetics bring `minority` up to `majority * ratio`.
pub fn synthetic_count(minority: usize, majority: usize, target_ratio: f64) -> usize {
    ((majority as f64 * target_ratio).round() as usize).saturating_sub(minority)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn smote<V: AsRef<[f64]>>(minority: &[V], majority_count: usize, config: &SmoteConfig) -> Result<Vec<Synthetic>, BalanceError> {
    config.validate()?;
    let m = minority.len();
    if m < 2 {
        return Err(BalanceError::InsufficientMinority(m));
    }
    let dim = minority[0].as_ref().len();
    if let Some(v) = minority.iter().find(|v| v.as_ref().len() != dim) {
        return Err(BalanceError::DimensionMismatch(dim, v.as_ref().len()));
    }
    let count = synthetic_count(m, majority_count, config.target_ratio);
    let draws = config.n_candidates.min(m - 1);
    let mut rng = Rng::new(config.seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let parent = i % m;
        let x = minority[parent].as_ref();
        let neighbor = rng
            .sample_distinct(m - 1, draws)
            .into_iter()
            .map(|j| if j >= parent { j + 1 } else { j })
            .map(|j| (squared_distance(x, minority[j].as_ref()), j))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, j)| j)
            .expect("at least one candidate");
        let u = rng.uniform();
        out.push(Synthetic { values: interpolate(x, minority[neighbor].as_ref(), u), parent, neighbor, u });
    }
    Ok(out)
}
