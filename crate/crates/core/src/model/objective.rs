//! Multiclass softmax cross-entropy.

use crate::corpus::Label;

pub const NUM_CLASSES: usize = 4;

/// Smallest hessian handed to the tree learner.
pub const HESS_FLOOR: f64 = 1e-16;

/// Numerically stable softmax.
pub fn softmax(scores: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = scores.map(|s| (s - max).exp());
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v = (*v / sum).max(f64::MIN_POSITIVE);
    }
    p
}

/// Cross-entropy `-ln softmax(scores)[true_class]`.
pub fn cross_entropy(scores: &[f64; NUM_CLASSES], true_class: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    lse - scores[true_class]
}

/// First and (diagonal) second derivatives of the cross-entropy w.r.t. the raw scores.
pub fn softmax_grad_hess(scores: &[f64; NUM_CLASSES], true_class: usize) -> ([f64; NUM_CLASSES], [f64; NUM_CLASSES]) {
    let p = softmax(scores);
    let mut grad = [0.0; NUM_CLASSES];
    let mut hess = [0.0; NUM_CLASSES];
    for k in 0..NUM_CLASSES {
        let y = if k == true_class { 1.0 } else { 0.0 };
        grad[k] = p[k] - y;
        hess[k] = (p[k] * (1.0 - p[k])).max(HESS_FLOOR);
    }
    (grad, hess)
}

/// Log class priors, each prior floored at 1e-6 so absent classes stay finite.
pub fn log_priors(labels: &[Label]) -> [f64; NUM_CLASSES] {
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    let n = labels.len().max(1) as f64;
    counts.map(|c| (c as f64 / n).max(1e-6).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_scores() {
        let (g, h) = softmax_grad_hess(&[0.3; 4], 0);
        assert_eq!(g, [-0.75, 0.25, 0.25, 0.25]);
        assert_eq!(h, [0.1875; 4]);
    }

    #[test]
    fn saturated_correct() {
        let (g, h) = softmax_grad_hess(&[1000.0, 0.0, 0.0, 0.0], 0);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
        assert!(h.iter().all(|&v| v >= HESS_FLOOR));
    }

    #[test]
    fn finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let s: [f64; 4] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
            let y = rng.random_range(0..4);
            let (g, h) = softmax_grad_hess(&s, y);
            for k in 0..4 {
                let eps = 1e-5;
                let mut up = s;
                up[k] += eps;
                let mut dn = s;
                dn[k] -= eps;
                let fd = (cross_entropy(&up, y) - cross_entropy(&dn, y)) / (2.0 * eps);
                assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-3), "grad {k}: {fd} vs {}", g[k]);
                let fdh = (softmax_grad_hess(&up, y).0[k] - softmax_grad_hess(&dn, y).0[k]) / (2.0 * eps);
                assert!((fdh - h[k]).abs() <= 1e-4 * h[k].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn priors() {
        let p = log_priors(&[Label::Happy, Label::Happy, Label::Sad, Label::Sad]);
        assert_eq!(p[0], 0.5f64.ln());
        assert_eq!(p[2], 1e-6f64.ln());
    }
}
