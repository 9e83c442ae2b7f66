//! Fully connected ReLU network with softmax cross-entropy, on a flat
//! parameter vector.
//!
//! Layout of the parameter vector, layer by layer: the weight matrix
//! (`out x in`, row-major) followed by the bias vector (`out`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::Dataset;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub n_classes: usize,
}

impl ArchSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden,
            n_classes,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.n_classes);
        w
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl Layer {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    arch: ArchSpec,
    layers: Vec<Layer>,
    n_params: usize,
    max_width: usize,
}

impl Mlp {
    pub fn new(arch: &ArchSpec) -> Result<Self> {
        if arch.input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be positive"));
        }
        if arch.n_classes < 2 {
            return Err(Error::invalid("n_classes", "need at least two outputs"));
        }
        if arch.hidden.contains(&0) {
            return Err(Error::invalid("hidden", "hidden widths must be positive"));
        }
        let widths = arch.widths();
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for w in widths.windows(2) {
            layers.push(Layer {
                fan_in: w[0],
                fan_out: w[1],
                offset,
            });
            offset += w[0] * w[1] + w[1];
        }
        Ok(Self {
            arch: arch.clone(),
            layers,
            n_params: offset,
            max_width: widths.iter().copied().max().unwrap_or(1),
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// He-normal weights, zero biases.
    pub fn init(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; self.n_params];
        for layer in &self.layers {
            let std = (2.0 / layer.fan_in as f64).sqrt();
            for w in &mut theta[layer.weights()] {
                let z: f64 = rng.sample(StandardNormal);
                *w = std * z;
            }
        }
        theta
    }

    /// Forward pass for one sample; `acts[l]` receives the input of layer `l`
    /// (post-ReLU) and the final entry holds the logits.
    fn forward(&self, theta: &[f64], x: &[f64], acts: &mut [Vec<f64>]) {
        acts[0].clear();
        acts[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            out.clear();
            let w = &theta[layer.weights()];
            let b = &theta[layer.biases()];
            for o in 0..layer.fan_out {
                let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(input.iter()) {
                    z += wi * xi;
                }
                out.push(if l < last { z.max(0.0) } else { z });
            }
        }
    }

    fn scratch(&self) -> Vec<Vec<f64>> {
        (0..=self.layers.len()).map(|_| Vec::with_capacity(self.max_width)).collect()
    }

    /// Mean cross-entropy over `batch`; writes the gradient of that mean into `grad`.
    pub fn loss_and_grad(&self, theta: &[f64], data: &Dataset, batch: &[usize], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.n_params);
        debug_assert_eq!(grad.len(), self.n_params);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut acts = self.scratch();
        let mut delta = Vec::with_capacity(self.max_width);
        let mut prev_delta = Vec::with_capacity(self.max_width);
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;

        for &i in batch {
            self.forward(theta, data.row(i), &mut acts);
            let logits = &acts[self.layers.len()];
            let y = data.labels[i];
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
            let lse = max + sum_exp.ln();
            total += lse - logits[y];

            delta.clear();
            delta.extend(logits.iter().map(|z| (z - lse).exp() * scale));
            delta[y] -= scale;

            for (l, layer) in self.layers.iter().enumerate().rev() {
                let input = &acts[l];
                let (w_range, b_range) = (layer.weights(), layer.biases());
                {
                    let gw = &mut grad[w_range.clone()];
                    for o in 0..layer.fan_out {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &mut gw[o * layer.fan_in..(o + 1) * layer.fan_in];
                        for (g, xi) in row.iter_mut().zip(input.iter()) {
                            *g += d * xi;
                        }
                    }
                }
                for (g, d) in grad[b_range].iter_mut().zip(delta.iter()) {
                    *g += d;
                }
                if l == 0 {
                    break;
                }
                let w = &theta[w_range];
                prev_delta.clear();
                prev_delta.resize(layer.fan_in, 0.0);
                for o in 0..layer.fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (p, wi) in prev_delta.iter_mut().zip(row) {
                        *p += d * wi;
                    }
                }
                // ReLU derivative; activations are post-ReLU so zero means inactive
                for (p, a) in prev_delta.iter_mut().zip(input.iter()) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
        total * scale
    }

    /// Mean cross-entropy over `batch` without gradients.
    pub fn loss(&self, theta: &[f64], data: &Dataset, batch: &[usize]) -> f64 {
        let mut acts = self.scratch();
        let mut total = 0.0;
        for &i in batch {
            self.forward(theta, data.row(i), &mut acts);
            let logits = &acts[self.layers.len()];
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            total += lse - logits[data.labels[i]];
        }
        total * (1.0 / batch.len() as f64)
    }

    /// Classification accuracy in percent.
    pub fn accuracy(&self, theta: &[f64], data: &Dataset) -> f64 {
        if data.is_empty() {
            return f64::NAN;
        }
        let mut acts = self.scratch();
        let mut correct = 0usize;
        for i in 0..data.len() {
            self.forward(theta, data.row(i), &mut acts);
            let logits = &acts[self.layers.len()];
            let mut best = 0;
            for (k, z) in logits.iter().enumerate() {
                if *z > logits[best] {
                    best = k;
                }
            }
            if best == data.labels[i] {
                correct += 1;
            }
        }
        100.0 * correct as f64 / data.len() as f64
    }
}
