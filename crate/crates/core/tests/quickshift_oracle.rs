mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::drivers::{random_instance, run_oracle_comparison};
use common::{quickshift_oracle, same_partition};
use twin::quickshift::{compute_density, link_parents, quickshift, QuickshiftParams, DENSITY_EPSILON};

#[test]
fn matches_brute_force_on_random_instances() {
    assert_eq!(run_oracle_comparison(300, 7), 0);
}

#[test]
fn transposed_input_matches_oracle_on_transposed_indexing() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let inst = random_instance(&mut rng);
        let (r, c) = (inst.rows, inst.cols);
        let t = |v: &[f64]| -> Vec<f64> { (0..c * r).map(|i| v[(i % r) * c + i / r]).collect() };
        let tm: Vec<bool> = (0..c * r).map(|i| inst.mask[(i % r) * c + i / r]).collect();
        let tv = t(&inst.values);
        let got = quickshift(&tv, &tm, c, r, &inst.params).unwrap();
        let p = inst.params;
        let want = quickshift_oracle(&tv, &tm, r, p.kernel_size, p.max_dist, p.ratio);
        assert!(same_partition(&got.labels, &want));
    }
}

#[test]
fn density_matches_compensated_resummation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let values: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let mask: Vec<bool> = (0..25).map(|_| rng.random_bool(0.2)).collect();
        let (sigma, ratio) = (rng.random_range(0.5..3.0), rng.random_range(0.0..10.0));
        let d = compute_density(&values, &mask, 5, sigma, ratio);
        for p in 0..25 {
            if mask[p] {
                assert!(d[p].is_nan());
                continue;
            }
            // Neumaier summation of the same terms
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for q in (0..25).filter(|q| !mask[*q]) {
                let dr = (p / 5) as f64 - (q / 5) as f64;
                let dc = (p % 5) as f64 - (q % 5) as f64;
                let dv = ratio * values[p] - ratio * values[q];
                let term = (-(dr * dr + dc * dc + dv * dv) / (2.0 * sigma * sigma)).exp();
                let t = sum + term;
                comp += if sum.abs() >= term.abs() {
                    (sum - t) + term
                } else {
                    (term - t) + sum
                };
                sum = t;
            }
            let want = sum + comp + DENSITY_EPSILON * p as f64;
            assert!((d[p] - want).abs() <= 1e-10, "cell {p}: {} vs {want}", d[p]);
        }
    }
}

#[test]
fn links_climb_strictly_and_forest_is_acyclic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let inst = random_instance(&mut rng);
        let p = inst.params;
        let d = compute_density(&inst.values, &inst.mask, inst.cols, p.kernel_size, p.ratio);
        let parent = link_parents(&d, &inst.values, &inst.mask, inst.rows, inst.cols, p.max_dist, p.ratio);
        for (i, par) in parent.iter().enumerate() {
            match par {
                None => assert!(inst.mask[i]),
                Some(q) if *q == i => {}
                Some(q) => assert!(d[*q] > d[i]),
            }
        }
        let seg = quickshift(&inst.values, &inst.mask, inst.rows, inst.cols, &p).unwrap();
        let labelled = seg.labels.iter().filter(|l| **l >= 0).count();
        assert_eq!(labelled, inst.mask.iter().filter(|m| !**m).count());
        assert!(seg.labels.iter().all(|l| *l < seg.n_regions as i64));
    }
}

#[test]
fn diagonal_valley_forms_its_own_region() {
    // inverted loss: a bright diagonal band through a dark 7x7 landscape
    let n = 7;
    let values: Vec<f64> = (0..n * n)
        .map(|i| {
            let (r, c) = ((i / n) as f64, (i % n) as f64);
            let off = (r - c).abs();
            if off < 1.5 {
                1.0 - 0.05 * off
            } else {
                0.1 * (r + c) / 12.0
            }
        })
        .collect();
    let mask = vec![false; n * n];
    let seg = quickshift(&values, &mask, n, n, &QuickshiftParams::default_for(n, n)).unwrap();
    let valley: Vec<usize> = (0..n).map(|k| k * n + k).collect();
    let label = seg.labels[valley[0]];
    assert!(valley.iter().all(|&i| seg.labels[i] == label));
    assert_ne!(seg.labels[n - 1], label);
    assert_ne!(seg.labels[(n - 1) * n], label);
    assert!(seg.n_regions >= 2);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = random_instance(&mut rng);
    let a = quickshift(&inst.values, &inst.mask, inst.rows, inst.cols, &inst.params).unwrap();
    let b = quickshift(&inst.values, &inst.mask, inst.rows, inst.cols, &inst.params).unwrap();
    assert_eq!(a, b);
}
