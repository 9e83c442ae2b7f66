//! Test-side oracles shared by the integration suites. Nothing here calls
//! into the code under test except for plain data types; the `drivers`
//! submodule pits the two against each other.
#![allow(dead_code)]

pub mod dd;
pub mod drivers;

use std::path::{Path, PathBuf};

use twin::task::Dataset;

/// Quickshift by brute force: materialises every pairwise distance and
/// scans all candidates, no windowing.
pub fn quickshift_oracle(values: &[f64], mask: &[bool], n_cols: usize, sigma: f64, max_dist: f64, ratio: f64) -> Vec<i64> {
    let n = values.len();
    let coords: Vec<[f64; 3]> = (0..n)
        .map(|i| [(i / n_cols) as f64, (i % n_cols) as f64, ratio * values[i]])
        .collect();
    let mut dist = vec![vec![0.0f64; n]; n];
    for p in 0..n {
        for q in 0..n {
            let d2: f64 = (0..3).map(|k| (coords[p][k] - coords[q][k]).powi(2)).sum();
            dist[p][q] = d2;
        }
    }
    let live: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
    let mut dens = vec![f64::NAN; n];
    for &p in &live {
        let mut s = 0.0;
        for &q in &live {
            s += (-dist[p][q] / (2.0 * sigma * sigma)).exp();
        }
        dens[p] = s + 1e-12 * p as f64;
    }
    let mut parent = vec![usize::MAX; n];
    for &p in &live {
        let mut best: Option<(f64, usize)> = None;
        for &q in &live {
            if q == p || dens[q].partial_cmp(&dens[p]) != Some(std::cmp::Ordering::Greater) {
                continue;
            }
            let d = dist[p][q].sqrt();
            if d > max_dist {
                continue;
            }
            let better = match best {
                None => true,
                Some((bd, bq)) => d < bd || (d == bd && q < bq),
            };
            if better {
                best = Some((d, q));
            }
        }
        parent[p] = best.map_or(p, |(_, q)| q);
    }
    let root = |mut p: usize| {
        while parent[p] != p {
            p = parent[p];
        }
        p
    };
    let mut roots: Vec<usize> = live.iter().copied().filter(|&p| parent[p] == p).collect();
    roots.sort_unstable();
    (0..n)
        .map(|p| {
            if mask[p] {
                -1
            } else {
                roots.binary_search(&root(p)).unwrap() as i64
            }
        })
        .collect()
}

/// True when two labelings induce the same partition with the same masked set.
pub fn same_partition(a: &[i64], b: &[i64]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut ab = HashMap::new();
    let mut ba = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        if (*x < 0) != (*y < 0) {
            return false;
        }
        if *ab.entry(*x).or_insert(*y) != *y || *ba.entry(*y).or_insert(*x) != *x {
            return false;
        }
    }
    true
}

/// Arithmetic the oracle forward pass needs; implemented for f64 and for
/// double-double.
pub trait OracleScalar: Copy + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self> + std::ops::Mul<Output = Self> {
    fn of(x: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn positive(self) -> bool;
    fn approx(self) -> f64;
}

impl OracleScalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn positive(self) -> bool {
        self > 0.0
    }
    fn approx(self) -> f64 {
        self
    }
}

impl OracleScalar for dd::Dd {
    fn of(x: f64) -> Self {
        dd::Dd::from(x)
    }
    fn exp(self) -> Self {
        dd::Dd::exp(self)
    }
    fn ln(self) -> Self {
        dd::Dd::ln(self)
    }
    fn positive(self) -> bool {
        self.is_positive()
    }
    fn approx(self) -> f64 {
        self.hi
    }
}

/// Forward pass of the documented parameter layout (per layer: `out x in`
/// row-major weights, then biases; ReLU between layers). Returns the summed
/// cross-entropy and the sign pattern of every hidden pre-activation.
pub fn mlp_oracle_sum<S: OracleScalar>(widths: &[usize], theta: &[S], data: &Dataset, batch: &[usize]) -> (S, Vec<bool>) {
    let mut total = S::of(0.0);
    let mut signs = Vec::new();
    for &i in batch {
        let mut a: Vec<S> = data.row(i).iter().map(|x| S::of(*x)).collect();
        let mut off = 0;
        for l in 0..widths.len() - 1 {
            let (fi, fo) = (widths[l], widths[l + 1]);
            let w = &theta[off..off + fi * fo];
            let b = &theta[off + fi * fo..off + fi * fo + fo];
            off += fi * fo + fo;
            let mut z: Vec<S> = (0..fo).map(|o| (0..fi).fold(b[o], |acc, k| acc + w[o * fi + k] * a[k])).collect();
            if l + 2 < widths.len() {
                for v in z.iter_mut() {
                    let on = v.positive();
                    signs.push(on);
                    if !on {
                        *v = S::of(0.0);
                    }
                }
            }
            a = z;
        }
        let m = a.iter().map(|z| z.approx()).fold(f64::NEG_INFINITY, f64::max);
        let sum = a.iter().fold(S::of(0.0), |acc, z| acc + (*z - S::of(m)).exp());
        total = total + (S::of(m) + sum.ln() - a[data.labels[i]]);
    }
    (total, signs)
}

/// Mean cross-entropy in f64 and the hidden sign pattern.
pub fn mlp_oracle_loss(widths: &[usize], theta: &[f64], data: &Dataset, batch: &[usize]) -> (f64, Vec<bool>) {
    let (sum, signs) = mlp_oracle_sum(widths, theta, data, batch);
    (sum / batch.len() as f64, signs)
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

/// Copy a fixture directory tree into `dest`.
pub fn copy_tree(src: &Path, dest: &Path) {
    std::fs::create_dir_all(dest).unwrap();
    for entry in std::fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let to = dest.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &to);
        } else {
            std::fs::copy(entry.path(), to).unwrap();
        }
    }
}
