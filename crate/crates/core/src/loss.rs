//! Soft-label loss kernels over logits, in double precision.
//!
//! `weighted_ce_loss` is the per-quadrant form used in a training loop,
//! `soft_ce_loss` the same quantity against a mixed label, and `kl_loss`
//! subtracts the target entropy so the loss reaches zero for soft targets too.
//! All three share the gradient `softmax(logits) − target`.

use crate::ricap::{mix_labels, QuadrantWeights, SoftLabel};
use crate::Result;

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - log_z).collect()
}

pub fn softmax(logits: &[f64]) -> SoftLabel {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    SoftLabel::from_probs_unchecked(exps.into_iter().map(|e| e / sum).collect())
}

/// `Σ_k W_k · (−log softmax(logits)[classes[k]])`
pub fn weighted_ce_loss(
    logits: &[f64],
    classes: [usize; 4],
    weights: &QuadrantWeights,
) -> Result<f64> {
    // validates the class ids
    mix_labels(classes, weights, logits.len())?;
    let log_p = log_softmax(logits);
    Ok(classes
        .iter()
        .enumerate()
        .map(|(k, &c)| weights.get(k) * -log_p[c])
        .sum())
}

pub fn soft_ce_loss(logits: &[f64], target: &SoftLabel) -> f64 {
    let log_p = log_softmax(logits);
    -target
        .probs()
        .iter()
        .zip(&log_p)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &lp)| t * lp)
        .sum::<f64>()
}

/// Shannon entropy with `0·log 0 = 0`.
pub fn entropy(target: &SoftLabel) -> f64 {
    -target
        .probs()
        .iter()
        .filter(|&&t| t > 0.0)
        .map(|&t| t * t.ln())
        .sum::<f64>()
}

pub fn kl_loss(logits: &[f64], target: &SoftLabel) -> f64 {
    let log_p = log_softmax(logits);
    target
        .probs()
        .iter()
        .zip(&log_p)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &lp)| t * (t.ln() - lp))
        .sum()
}

/// Gradient of both `soft_ce_loss` and `kl_loss` with respect to the logits.
pub fn grad_soft_ce(logits: &[f64], target: &SoftLabel) -> Vec<f64> {
    softmax(logits)
        .probs()
        .iter()
        .zip(target.probs())
        .map(|(p, t)| p - t)
        .collect()
}

pub fn grad_kl(logits: &[f64], target: &SoftLabel) -> Vec<f64> {
    grad_soft_ce(logits, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN4: f64 = 1.386_294_361_119_890_6;

    fn label(p: &[f64]) -> SoftLabel {
        SoftLabel::new(p.to_vec()).unwrap()
    }

    #[test]
    fn softmax_values() {
        assert_eq!(softmax(&[0.7; 5]).probs(), &[0.2; 5]);
        let p = softmax(&[1000.0, 0.0]);
        assert_eq!(p.probs()[0], 1.0);
        assert!(p.probs()[1] >= 0.0 && p.probs()[1] < 1e-300);
        // high-precision reference values
        let want = [
            0.090_030_573_170_380_46,
            0.244_728_471_054_797_65,
            0.665_240_955_774_821_9,
        ];
        for (got, want) in softmax(&[1.0, 2.0, 3.0]).probs().iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_ce_examples() {
        let uniform = [0.0; 4];
        let first = QuadrantWeights::from_areas([1, 0, 0, 0]).unwrap();
        assert!((weighted_ce_loss(&uniform, [2, 0, 1, 3], &first).unwrap() - LN4).abs() < 1e-12);
        let even = QuadrantWeights::from_areas([1, 1, 1, 1]).unwrap();
        assert!((weighted_ce_loss(&uniform, [0, 1, 2, 3], &even).unwrap() - LN4).abs() < 1e-12);
        assert!(weighted_ce_loss(&uniform, [0, 1, 2, 4], &even).is_err());
    }

    #[test]
    fn soft_ce_examples() {
        let logits = [0.3, -1.2, 2.0];
        let one_hot = SoftLabel::one_hot(2, 3).unwrap();
        assert!((soft_ce_loss(&logits, &one_hot) + log_softmax(&logits)[2]).abs() < 1e-15);
        let p = softmax(&logits);
        assert!((soft_ce_loss(&logits, &p) - entropy(&p)).abs() < 1e-12);
        assert!((soft_ce_loss(&[0.0; 4], &label(&[0.25; 4])) - LN4).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let logits = [0.5, 1.5, -0.25, 0.0];
        assert!(kl_loss(&logits, &softmax(&logits)).abs() < 1e-12);
        let t = label(&[0.0, 0.5625, 0.25, 0.1875]);
        assert!((kl_loss(&logits, &t) - (soft_ce_loss(&logits, &t) - entropy(&t))).abs() < 1e-12);
        assert!(grad_soft_ce(&logits, &softmax(&logits)).iter().all(|g| g.abs() < 1e-15));
    }

    fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut hi = x.to_vec();
                let mut lo = x.to_vec();
                hi[i] += step;
                lo[i] -= step;
                (f(&hi) - f(&lo)) / (2.0 * step)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt()
            + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if den == 0.0 { 0.0 } else { num / den }
    }

    fn simplex(raw: &[f64]) -> SoftLabel {
        let s: f64 = raw.iter().sum();
        let mut p: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let err: f64 = 1.0 - p.iter().sum::<f64>();
        p[0] += err;
        label(&p)
    }

    proptest! {
        #[test]
        fn loss_identities(
            logits in prop::collection::vec(-8.0f64..8.0, 6),
            areas in prop::array::uniform4(0u64..300),
            classes in prop::array::uniform4(0usize..6),
        ) {
            prop_assume!(areas.iter().sum::<u64>() > 0);
            let w = QuadrantWeights::from_areas(areas).unwrap();
            let target = mix_labels(classes, &w, 6).unwrap();
            let a = weighted_ce_loss(&logits, classes, &w).unwrap();
            prop_assert!((a - soft_ce_loss(&logits, &target)).abs() < 1e-12);
            let kl = kl_loss(&logits, &target);
            prop_assert!((kl - (soft_ce_loss(&logits, &target) - entropy(&target))).abs() < 1e-12);
            prop_assert!(kl >= -1e-12);
            let g = grad_soft_ce(&logits, &target);
            prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }

        #[test]
        fn gradients_match_finite_differences(
            logits in prop::collection::vec(-4.0f64..4.0, 5),
            raw in prop::collection::vec(0.01f64..1.0, 5),
        ) {
            let t = simplex(&raw);
            let analytic = grad_kl(&logits, &t);
            let fd_kl = central_difference(|z| kl_loss(z, &t), &logits, 1e-5);
            let fd_ce = central_difference(|z| soft_ce_loss(z, &t), &logits, 1e-5);
            prop_assert!(rel_err(&analytic, &fd_kl) < 1e-6);
            prop_assert!(rel_err(&grad_soft_ce(&logits, &t), &fd_ce) < 1e-6);
        }
    }
}
