//! Momentum SGD with L2-coupled weight decay and per-epoch learning-rate schedules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Cosine,
    /// Base rate until half the budget, ×0.1 until three quarters, ×0.01 after.
    Piecewise,
    Constant,
}

impl LrSchedule {
    pub fn rate(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Cosine => cosine_lr(base, epoch, epochs),
            LrSchedule::Piecewise => {
                if 2 * epoch < epochs {
                    base
                } else if 4 * epoch < 3 * epochs {
                    base * 0.1
                } else {
                    base * 0.01
                }
            }
            LrSchedule::Constant => base,
        }
    }
}

pub fn cosine_lr(base: f64, epoch: usize, epochs: usize) -> f64 {
    base * 0.5 * (1.0 + (PI * epoch as f64 / epochs as f64).cos())
}

/// One momentum-SGD update in place:
/// `g = grad + wd·θ; v = μ·v + g; θ = θ − lr·v`.
///
/// Returns `false` when any updated parameter is non-finite.
pub fn sgdm_step(theta: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, wd: f64, momentum: f64) -> bool {
    debug_assert_eq!(theta.len(), velocity.len());
    debug_assert_eq!(theta.len(), grad.len());
    let mut finite = true;
    for ((p, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        let step = g + wd * *p;
        *v = momentum * *v + step;
        *p -= lr * *v;
        finite &= p.is_finite();
    }
    finite
}

/// Euclidean norm over every trainable parameter.
pub fn param_l2_norm(theta: &[f64]) -> f64 {
    theta.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_points() {
        assert_eq!(cosine_lr(0.1, 0, 10), 0.1);
        assert!((cosine_lr(0.1, 5, 10) - 0.05).abs() < 1e-17);
        // 0.05 * (1 + cos(0.9π)) evaluated independently
        let expected = 0.05 * (1.0 - 0.951_056_516_295_153_6);
        assert!((cosine_lr(0.1, 9, 10) - expected).abs() < 1e-15);
        assert!((cosine_lr(0.1, 9, 10) - 0.002_447_2).abs() < 1e-7);
    }

    #[test]
    fn piecewise_and_constant() {
        let s = LrSchedule::Piecewise;
        assert_eq!(s.rate(1.0, 0, 100), 1.0);
        assert_eq!(s.rate(1.0, 49, 100), 1.0);
        assert_eq!(s.rate(1.0, 50, 100), 0.1);
        assert_eq!(s.rate(1.0, 75, 100), 0.01);
        assert_eq!(LrSchedule::Constant.rate(0.3, 99, 100), 0.3);
    }

    #[test]
    fn worked_update() {
        let (mut t, mut v) = ([1.0], [0.5]);
        assert!(sgdm_step(&mut t, &mut v, &[0.2], 0.1, 0.01, 0.9));
        assert!((v[0] - 0.66).abs() < 1e-15);
        assert!((t[0] - 0.934).abs() < 1e-15);
    }

    #[test]
    fn plain_sgd_and_pure_shrinkage() {
        let (mut t, mut v) = ([2.0, -1.0], [0.0, 0.0]);
        sgdm_step(&mut t, &mut v, &[0.5, 0.25], 0.1, 0.0, 0.0);
        assert_eq!(t, [2.0 - 0.1 * 0.5, -1.0 - 0.1 * 0.25]);

        let (mut t, mut v) = ([2.0, -1.0], [0.0, 0.0]);
        sgdm_step(&mut t, &mut v, &[0.0, 0.0], 0.1, 0.5, 0.0);
        assert_eq!(t, [2.0 * (1.0 - 0.05), -(1.0 - 0.05)]);
    }

    #[test]
    fn reports_non_finite() {
        let (mut t, mut v) = ([1e300], [0.0]);
        assert!(!sgdm_step(&mut t, &mut v, &[1e300], 1e10, 0.0, 0.0));
    }

    #[test]
    fn norms() {
        assert_eq!(param_l2_norm(&[0.0, 0.0]), 0.0);
        assert_eq!(param_l2_norm(&[3.0, 4.0]), 5.0);
    }

    /// Double-double accumulation of Σθ² as an extended-precision reference.
    fn norm_extended(theta: &[f64]) -> f64 {
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for &x in theta {
            let sq = x * x;
            let sq_err = x.mul_add(x, -sq);
            let s = hi + sq;
            let bp = s - hi;
            let err = (hi - (s - bp)) + (sq - bp);
            hi = s;
            lo += err + sq_err;
        }
        (hi + lo).sqrt()
    }

    proptest! {
        #[test]
        fn norm_matches_extended_precision(theta in prop::collection::vec(-1e3f64..1e3, 1..500)) {
            let a = param_l2_norm(&theta);
            let b = norm_extended(&theta);
            prop_assert!((a - b).abs() <= 1e-12 * b.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn decay_equivalence(theta in prop::collection::vec(-10f64..10.0, 1..50), lr in 1e-4f64..1.0, wd in 0f64..1.0, seed in any::<u64>()) {
            let grad: Vec<f64> = theta.iter().enumerate().map(|(i, x)| (x * 0.3 + i as f64 + seed as f64 % 7.0).sin()).collect();
            let mut t = theta.clone();
            let mut v = vec![0.0; t.len()];
            sgdm_step(&mut t, &mut v, &grad, lr, wd, 0.0);
            for ((new, old), g) in t.iter().zip(&theta).zip(&grad) {
                let expected = old - lr * (g + wd * old);
                prop_assert_eq!(*new, expected);
                prop_assert!((new - (old * (1.0 - lr * wd) - lr * g)).abs() <= 1e-12 * (1.0 + old.abs()));
            }
        }

        #[test]
        fn pure_decay_shrinks_norm(theta in prop::collection::vec(-10f64..10.0, 1..50), lr in 1e-3f64..1.0, wd in 1e-3f64..0.99) {
            prop_assume!(param_l2_norm(&theta) > 1e-6);
            let mut t = theta.clone();
            let mut v = vec![0.0; t.len()];
            let zero = vec![0.0; t.len()];
            let mut prev = param_l2_norm(&t);
            for _ in 0..5 {
                sgdm_step(&mut t, &mut v, &zero, lr, wd, 0.0);
                let now = param_l2_norm(&t);
                prop_assert!(now < prev);
                prev = now;
            }
        }
    }
}
