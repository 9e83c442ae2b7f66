//! Drivers that run the code under test against the oracles in the parent
//! module; shared by the focused suites and the acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dd::Dd;
use super::{mlp_oracle_loss, mlp_oracle_sum, quickshift_oracle, same_partition};
use twin::mlp::{ArchSpec, Mlp};
use twin::quickshift::{quickshift, QuickshiftParams};
use twin::task::Dataset;

pub struct Instance {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub params: QuickshiftParams,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let rows = rng.random_range(2..=6);
    let cols = rng.random_range(2..=6);
    let n = rows * cols;
    let p_mask = rng.random_range(0.0..0.5);
    let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(p_mask)).collect();
    let keep = rng.random_range(0..n);
    mask[keep] = false;
    // quantized values provoke exact distance and density ties
    let quantized = rng.random_bool(0.3);
    let values = (0..n)
        .map(|i| {
            if mask[i] {
                0.0
            } else if quantized {
                rng.random_range(0..5) as f64 / 4.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    let params = QuickshiftParams::new(rng.random_range(0.3..4.0), rng.random_range(0.5..5.0), rng.random_range(0.0..20.0));
    Instance {
        rows,
        cols,
        values,
        mask,
        params,
    }
}

pub fn run_oracle_comparison(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..n {
        let inst = random_instance(&mut rng);
        let got = quickshift(&inst.values, &inst.mask, inst.rows, inst.cols, &inst.params).unwrap();
        let p = inst.params;
        let want = quickshift_oracle(&inst.values, &inst.mask, inst.cols, p.kernel_size, p.max_dist, p.ratio);
        if got.labels != want || !same_partition(&got.labels, &want) {
            mismatches += 1;
        }
    }
    mismatches
}

/// Worst relative error between the analytic gradient and central finite
/// differences of the test-side forward pass, over `n_nets` random MLPs. The
/// stencil is evaluated in double-double so its rounding noise (otherwise
/// about ε·L/h) stays far below the tolerance even for tiny gradients.
pub fn worst_gradient_error(n_nets: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for net in 0..n_nets {
        let input_dim = rng.random_range(1..6);
        let depth = rng.random_range(1..3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..9)).collect();
        let n_classes = rng.random_range(2..5);
        let arch = ArchSpec::new(input_dim, hidden.clone(), n_classes);
        let mlp = Mlp::new(&arch).unwrap();
        assert!(mlp.n_params() <= 500);
        let n = rng.random_range(1..8);
        let data = Dataset {
            inputs: (0..n * input_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            labels: (0..n).map(|_| rng.random_range(0..n_classes)).collect(),
            dim: input_dim,
        };
        let batch: Vec<usize> = (0..n).collect();
        let mut theta = mlp.init(net as u64);
        for b in theta.iter_mut() {
            *b += rng.random_range(-0.1..0.1);
        }
        let mut grad = vec![0.0; mlp.n_params()];
        let loss = mlp.loss_and_grad(&theta, &data, &batch, &mut grad);

        let mut widths = vec![input_dim];
        widths.extend(&hidden);
        widths.push(n_classes);
        let (oracle_loss, base_signs) = mlp_oracle_loss(&widths, &theta, &data, &batch);
        assert!((loss - oracle_loss).abs() <= 1e-12 * oracle_loss.abs().max(1.0));

        let h = 1e-6;
        let wide: Vec<Dd> = theta.iter().map(|t| Dd::from(*t)).collect();
        for k in 0..theta.len() {
            let mut plus = wide.clone();
            plus[k] = plus[k] + Dd::from(h);
            let mut minus = wide.clone();
            minus[k] = minus[k] - Dd::from(h);
            let (lp, sp) = mlp_oracle_sum(&widths, &plus, &data, &batch);
            let (lm, sm) = mlp_oracle_sum(&widths, &minus, &data, &batch);
            // a ReLU switching inside the stencil invalidates the difference quotient
            if sp != base_signs || sm != base_signs {
                continue;
            }
            let fd = (lp - lm).hi / (2.0 * h * batch.len() as f64);
            let g = grad[k];
            if g.abs().max(fd.abs()) <= 1e-8 {
                continue;
            }
            let rel = (g - fd).abs() / g.abs().max(fd.abs());
            worst = worst.max(rel);
            checked += 1;
        }
    }
    assert!(checked > 100 * n_nets / 10, "too few parameters checked: {checked}");
    worst
}
