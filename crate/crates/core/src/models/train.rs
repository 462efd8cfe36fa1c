//! Mini-batch gradient descent and Platt calibration.

use super::layers::{logistic_loss, sigmoid};
use super::nets::Network;
use super::{Calibration, Schedule};
use crate::numerics::Rng;

/// One pass over `examples` in a shuffled order. Returns the mean example
/// loss plus the regularisation term, or `None` once anything goes non-finite.
pub(super) fn run_epoch(
    net: &dyn Network,
    params: &mut [f64],
    examples: &[(Vec<f64>, bool)],
    schedule: Schedule,
    shuffle: &mut Rng,
    mut drop: Option<&mut Rng>,
) -> Option<f64> {
    let n = examples.len();
    let mut order: Vec<usize> = (0..n).collect();
    shuffle.shuffle(&mut order);
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;
    for batch in order.chunks(schedule.batch_size) {
        grad.fill(0.0);
        let mut batch_loss = 0.0;
        for &i in batch {
            let (x, y) = &examples[i];
            batch_loss += net.loss_grad(params, x, *y, drop.as_deref_mut(), &mut grad);
        }
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        net.penalty(params, n, Some(&mut grad));
        if !batch_loss.is_finite() {
            return None;
        }
        total += batch_loss;
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= schedule.learning_rate * g;
        }
    }
    let loss = total / n as f64 + net.penalty(params, n, None);
    (loss.is_finite() && params.iter().all(|p| p.is_finite())).then_some(loss)
}

/// Fits `P = sigmoid(a * score + b)` by Newton's method on smoothed targets,
/// starting from `a = 1, b = 0`.
pub(super) fn platt(scores: &[(f64, bool)]) -> Calibration {
    let n_pos = scores.iter().filter(|s| s.1).count() as f64;
    let n_neg = scores.len() as f64 - n_pos;
    let t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    let t_neg = 1.0 / (n_neg + 2.0);
    let objective = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .map(|&(s, y)| {
                let t = if y { t_pos } else { t_neg };
                let (l1, _) = logistic_loss(a * s + b, true);
                let (l0, _) = logistic_loss(a * s + b, false);
                t * l1 + (1.0 - t) * l0
            })
            .sum()
    };
    let (mut a, mut b) = (1.0, 0.0);
    let mut f = objective(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for &(s, y) in scores {
            let t = if y { t_pos } else { t_neg };
            let p = sigmoid(a * s + b);
            let d = p - t;
            let w = p * (1.0 - p);
            ga += d * s;
            gb += d;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        if ga.abs() < 1e-10 && gb.abs() < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let (da, db) = if det.abs() > 1e-300 { (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det) } else { (-ga, -gb) };
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf.is_finite() && nf < f {
                (a, b, f) = (na, nb, nf);
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Calibration { a, b }
}
