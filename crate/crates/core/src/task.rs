//! Seeded Gaussian-blob classification tasks.
//!
//! Small training sets paired with large test sets reproduce the
//! "too few samples to represent the test distribution" regime in which
//! training-set statistics and a tiny validation split disagree with the test
//! set.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const VAL_STREAM: u64 = 0x5eed_0001;
const TEST_STREAM: u64 = 0x5eed_0002;

/// Row-major design matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub seed: u64,
    /// Seed of the validation draw; reshuffling it leaves train and test untouched.
    pub val_seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_classes: usize,
    pub input_dim: usize,
    pub class_separation: f64,
    pub label_noise: f64,
}

impl TaskSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        seed: u64,
        n_train: usize,
        n_val: usize,
        n_test: usize,
        n_classes: usize,
        input_dim: usize,
        class_separation: f64,
        label_noise: f64,
    ) -> Self {
        Self {
            seed,
            val_seed: seed,
            n_train,
            n_val,
            n_test,
            n_classes,
            input_dim,
            class_separation,
            label_noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("n_classes", "need at least two classes"));
        }
        if self.n_train < self.n_classes {
            return Err(Error::invalid(
                "n_train",
                format!("{} samples cannot cover {} classes", self.n_train, self.n_classes),
            ));
        }
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be positive"));
        }
        if self.n_classes > self.input_dim {
            // simplex placement needs one orthogonal direction per class
            return Err(Error::invalid(
                "n_classes",
                format!(
                    "cannot place {} equidistant class means in {} dimensions",
                    self.n_classes, self.input_dim
                ),
            ));
        }
        if !(self.class_separation.is_finite() && self.class_separation > 0.0) {
            return Err(Error::invalid("class_separation", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::invalid("label_noise", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub spec: TaskSpec,
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Dataset,
    pub means: Vec<Vec<f64>>,
}

impl SyntheticTask {
    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix; rows are the basis.
fn random_rotation(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

fn draw(n: usize, means: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Dataset {
    let dim = means[0].len();
    let k = means.len();
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(rng);
    let mut inputs = Vec::with_capacity(n * dim);
    for &y in &labels {
        for &m in &means[y] {
            let z: f64 = rng.sample(StandardNormal);
            inputs.push(m + z);
        }
    }
    Dataset { inputs, labels, dim }
}

/// Gaussian class clusters (unit within-class variance) whose means sit at
/// pairwise distance `class_separation` on a randomly rotated simplex.
pub fn make_synthetic_task(spec: &TaskSpec) -> Result<SyntheticTask> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rotation = random_rotation(spec.input_dim, &mut rng);
    let scale = spec.class_separation / std::f64::consts::SQRT_2;
    // class k sits at scale * e_k in the rotated frame
    let means: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|k| rotation[k].iter().map(|x| x * scale).collect())
        .collect();

    let mut train = draw(spec.n_train, &means, &mut rng);
    let n_noisy = (spec.label_noise * spec.n_train as f64).round() as usize;
    let mut order: Vec<usize> = (0..spec.n_train).collect();
    order.shuffle(&mut rng);
    for &i in order.iter().take(n_noisy) {
        train.labels[i] = rng.random_range(0..spec.n_classes);
    }

    let val = (spec.n_val > 0).then(|| {
        let mut r = ChaCha8Rng::seed_from_u64(spec.val_seed ^ VAL_STREAM);
        draw(spec.n_val, &means, &mut r)
    });
    let mut r = ChaCha8Rng::seed_from_u64(spec.seed ^ TEST_STREAM);
    let test = draw(spec.n_test, &means, &mut r);

    Ok(SyntheticTask {
        spec: spec.clone(),
        train,
        val,
        test,
        means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn means_are_equidistant() {
        let spec = TaskSpec::new(3, 100, 0, 1000, 4, 8, 1.5, 0.1);
        let task = make_synthetic_task(&spec).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d = dist(&task.means[i], &task.means[j]);
                assert!((d - 1.5).abs() < 1e-12, "{d}");
            }
        }
    }

    #[test]
    fn shapes_labels_and_determinism() {
        let spec = TaskSpec::new(1, 200, 50, 2000, 2, 2, 3.0, 0.0);
        let a = make_synthetic_task(&spec).unwrap();
        let b = make_synthetic_task(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 200);
        assert_eq!(a.val.as_ref().unwrap().len(), 50);
        assert_eq!(a.test.inputs.len(), 2000 * 2);
        assert!(a.train.labels.iter().all(|&y| y < 2));
        assert_eq!(a.train.labels.iter().filter(|&&y| y == 0).count(), 100);
    }

    #[test]
    fn val_seed_only_moves_validation() {
        let spec = TaskSpec::new(7, 60, 10, 600, 3, 4, 2.0, 0.1);
        let mut other = spec.clone();
        other.val_seed = 99;
        let a = make_synthetic_task(&spec).unwrap();
        let b = make_synthetic_task(&other).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_ne!(a.val, b.val);
    }

    #[test]
    fn label_noise_flips_some_labels() {
        let clean = make_synthetic_task(&TaskSpec::new(5, 200, 0, 10, 4, 8, 4.0, 0.0)).unwrap();
        let noisy = make_synthetic_task(&TaskSpec::new(5, 200, 0, 10, 4, 8, 4.0, 0.5)).unwrap();
        assert_eq!(clean.train.inputs, noisy.train.inputs);
        let changed = clean.train.labels.iter().zip(&noisy.train.labels).filter(|(a, b)| a != b).count();
        // 100 resampled labels, each kept with probability 1/4
        assert!((40..=100).contains(&changed), "{changed}");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(make_synthetic_task(&TaskSpec::new(1, 3, 0, 10, 4, 8, 1.0, 0.0)).is_err());
        assert!(make_synthetic_task(&TaskSpec::new(1, 30, 0, 10, 9, 8, 1.0, 0.0)).is_err());
        assert!(make_synthetic_task(&TaskSpec::new(1, 30, 0, 10, 2, 8, 0.0, 0.0)).is_err());
        assert!(make_synthetic_task(&TaskSpec::new(1, 30, 0, 10, 2, 8, 1.0, 1.0)).is_err());
    }
}
