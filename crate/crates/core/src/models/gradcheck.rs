//! Finite-difference verification of the hand-written backward passes.

use super::{build_network, InputShape, ModelError, ModelSpec};
use crate::numerics::{derive_seed, Rng};

pub const GRADCHECK_STEP: f64 = 1e-5;
const CHECKED_PARAMS: usize = 150;
const TOY_EXAMPLES: usize = 3;
/// Gradients smaller than this are compared absolutely rather than relatively.
const RELATIVE_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    pub n_params: usize,
}

/// Compares analytic gradients with central differences on a few random
/// toy examples (dropout masks fixed per example) for up to
/// [`CHECKED_PARAMS`] randomly chosen parameters. The relative error of a
/// parameter is `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn gradient_check(spec: &ModelSpec, shape: InputShape, seed: u64) -> Result<GradCheck, ModelError> {
    let net = build_network(spec, shape)?;
    let mut rng = Rng::new(seed);
    let mut params = net.init(&mut rng);
    // move biases and zero-initialised weights off their starting values
    params.iter_mut().for_each(|p| *p += 0.05 * rng.standard_normal());
    let examples: Vec<(Vec<f64>, bool)> =
        (0..TOY_EXAMPLES).map(|e| ((0..net.input_len()).map(|_| rng.standard_normal()).collect(), e % 2 == 0)).collect();

    let objective = |p: &[f64], grad: &mut [f64]| -> f64 {
        let mut loss = 0.0;
        for (e, (x, y)) in examples.iter().enumerate() {
            let mut drop = Rng::new(derive_seed(seed, &[e as u64]));
            loss += net.loss_grad(p, x, *y, Some(&mut drop), grad);
        }
        loss + net.penalty(p, examples.len(), Some(grad))
    };

    let mut analytic = vec![0.0; params.len()];
    objective(&params, &mut analytic);
    let chosen = rng.sample_distinct(params.len(), CHECKED_PARAMS.min(params.len()));
    let mut scratch = vec![0.0; params.len()];
    let mut worst: f64 = 0.0;
    for &i in &chosen {
        let orig = params[i];
        params[i] = orig + GRADCHECK_STEP;
        let up = objective(&params, &mut scratch);
        params[i] = orig - GRADCHECK_STEP;
        let down = objective(&params, &mut scratch);
        params[i] = orig;
        let numeric = (up - down) / (2.0 * GRADCHECK_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(RELATIVE_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(GradCheck { max_relative_error: worst, checked: chosen.len(), n_params: params.len() })
}
