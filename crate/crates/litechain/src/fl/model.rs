//! Desk-scale classifier models: a softmax-linear head or a one-hidden-layer
//! ReLU MLP, both on flat `f64` weight vectors so they hash and serialize
//! canonically.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{DatasetShard, DetRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ModelKind {
    SoftmaxLinear,
    Mlp { hidden: usize },
}

/// The model architecture every device trains, fixed at task start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub classes: usize,
    pub init_seed: u64,
}

impl GlobalModelSpec {
    pub fn softmax_linear(input_dim: usize, classes: usize, init_seed: u64) -> Self {
        Self {
            kind: ModelKind::SoftmaxLinear,
            input_dim,
            classes,
            init_seed,
        }
    }

    /// Total number of parameters in the flat weight vector.
    pub fn param_count(&self) -> usize {
        match self.kind {
            ModelKind::SoftmaxLinear => (self.input_dim + 1) * self.classes,
            ModelKind::Mlp { hidden } => {
                (self.input_dim + 1) * hidden + (hidden + 1) * self.classes
            }
        }
    }

    /// Seeded initial weights shared by all devices.
    pub fn init_weights(&self) -> Vec<f64> {
        let mut rng = DetRng::from_seed(self.init_seed).split("model-init");
        (0..self.param_count())
            .map(|_| rng.random_range(-0.05..0.05))
            .collect()
    }

    /// Class scores for one sample. `out` must hold `classes` slots.
    pub fn logits(&self, weights: &[f64], x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(weights.len(), self.param_count());
        debug_assert_eq!(x.len(), self.input_dim);
        match self.kind {
            ModelKind::SoftmaxLinear => {
                let (w, b) = weights.split_at(self.input_dim * self.classes);
                for c in 0..self.classes {
                    let row = &w[c * self.input_dim..(c + 1) * self.input_dim];
                    out[c] = b[c] + dot(row, x);
                }
            }
            ModelKind::Mlp { hidden } => {
                let (w1, rest) = weights.split_at(self.input_dim * hidden);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden * self.classes);
                let mut act = vec![0.0; hidden];
                for h in 0..hidden {
                    let row = &w1[h * self.input_dim..(h + 1) * self.input_dim];
                    act[h] = (b1[h] + dot(row, x)).max(0.0);
                }
                for c in 0..self.classes {
                    let row = &w2[c * hidden..(c + 1) * hidden];
                    out[c] = b2[c] + dot(row, &act);
                }
            }
        }
    }

    pub fn predict(&self, weights: &[f64], x: &[f64]) -> u32 {
        let mut z = vec![0.0; self.classes];
        self.logits(weights, x, &mut z);
        argmax(&z)
    }

    /// Fraction of correctly classified samples among `indices` of a shard
    /// (all samples when `indices` is `None`).
    pub fn accuracy(&self, weights: &[f64], shard: &DatasetShard, indices: Option<&[usize]>) -> f64 {
        let eval = |i: usize| (self.predict(weights, shard.row(i)) == shard.labels[i]) as u32;
        let (hits, total) = match indices {
            Some(idx) => (idx.iter().map(|&i| eval(i)).sum::<u32>(), idx.len()),
            None => ((0..shard.len()).map(eval).sum::<u32>(), shard.len()),
        };
        if total == 0 {
            return 0.0;
        }
        hits as f64 / total as f64
    }

    /// Mean cross-entropy loss over the given sample indices.
    pub fn batch_loss(&self, weights: &[f64], shard: &DatasetShard, indices: &[usize]) -> f64 {
        let mut z = vec![0.0; self.classes];
        let mut total = 0.0;
        for &i in indices {
            self.logits(weights, shard.row(i), &mut z);
            total += cross_entropy(&z, shard.labels[i] as usize);
        }
        total / indices.len() as f64
    }

    /// Mean cross-entropy loss and its analytic gradient over a batch.
    pub fn batch_loss_grad(
        &self,
        weights: &[f64],
        shard: &DatasetShard,
        indices: &[usize],
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        let mut z = vec![0.0; self.classes];
        let mut loss = 0.0;
        let inv_batch = 1.0 / indices.len() as f64;
        match self.kind {
            ModelKind::SoftmaxLinear => {
                let wlen = self.input_dim * self.classes;
                for &i in indices {
                    let x = shard.row(i);
                    let y = shard.labels[i] as usize;
                    self.logits(weights, x, &mut z);
                    loss += cross_entropy(&z, y);
                    softmax_in_place(&mut z);
                    for c in 0..self.classes {
                        let dz = (z[c] - (c == y) as usize as f64) * inv_batch;
                        let row = &mut grad[c * self.input_dim..(c + 1) * self.input_dim];
                        for (g, &xv) in row.iter_mut().zip(x) {
                            *g += dz * xv;
                        }
                        grad[wlen + c] += dz;
                    }
                }
            }
            ModelKind::Mlp { hidden } => {
                let w1_len = self.input_dim * hidden;
                let b1_off = w1_len;
                let w2_off = w1_len + hidden;
                let b2_off = w2_off + hidden * self.classes;
                let (w1, rest) = weights.split_at(w1_len);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, _b2) = rest.split_at(hidden * self.classes);
                let mut act = vec![0.0; hidden];
                for &i in indices {
                    let x = shard.row(i);
                    let y = shard.labels[i] as usize;
                    for h in 0..hidden {
                        let row = &w1[h * self.input_dim..(h + 1) * self.input_dim];
                        act[h] = (b1[h] + dot(row, x)).max(0.0);
                    }
                    self.logits(weights, x, &mut z);
                    loss += cross_entropy(&z, y);
                    softmax_in_place(&mut z);
                    let mut dact = vec![0.0; hidden];
                    for c in 0..self.classes {
                        let dz = (z[c] - (c == y) as usize as f64) * inv_batch;
                        for h in 0..hidden {
                            grad[w2_off + c * hidden + h] += dz * act[h];
                            dact[h] += dz * w2[c * hidden + h];
                        }
                        grad[b2_off + c] += dz;
                    }
                    for h in 0..hidden {
                        if act[h] > 0.0 {
                            let row =
                                &mut grad[h * self.input_dim..(h + 1) * self.input_dim];
                            for (g, &xv) in row.iter_mut().zip(x) {
                                *g += dact[h] * xv;
                            }
                            grad[b1_off + h] += dact[h];
                        }
                    }
                }
            }
        }
        (loss * inv_batch, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(z: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best as u32
}

/// `-ln softmax(z)[y]`, stabilized by max subtraction.
fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    log_sum - z[y]
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}
