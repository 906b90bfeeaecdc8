//! Desk-scale federated training: local SGD on cross-entropy, off-chain
//! verified FedAvg within a cluster, and staleness-aware asynchronous
//! aggregation across clusters.

mod data;
mod model;
mod staleness;

pub use data::{generate_blobs, load_csv, partition_data};
pub use model::{GlobalModelSpec, ModelKind};
pub use staleness::{staleness_weight, StalenessAggregator};

use rand::Rng;
use thiserror::Error;

use crate::core::{DatasetShard, Device, DetRng, HashError, ModelUpdate};

#[derive(Debug, Error, PartialEq)]
pub enum FlError {
    #[error("divergence: non-finite loss at local step {step}")]
    Divergence { step: usize },
    #[error("device {0} has an empty shard")]
    EmptyShard(u32),
    #[error("local training requires at least one step")]
    ZeroSteps,
    #[error("empty aggregation")]
    EmptyAggregation,
    #[error("aggregation inputs disagree in dimension")]
    DimensionMismatch,
    #[error("dirichlet alpha must be positive, got {0}")]
    InvalidDirichletAlpha(f64),
    #[error("dataset of {samples} samples cannot cover {devices} devices")]
    DatasetTooSmall { samples: usize, devices: usize },
    #[error("dataset io: {0}")]
    DatasetIo(String),
    #[error(transparent)]
    Hash(#[from] HashError),
}

/// Why a model update failed off-chain verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyReject {
    Signature,
    Quality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyOutcome {
    Accepted,
    Rejected(VerifyReject),
}

/// Runs `steps` mini-batch SGD steps of cross-entropy on the device's
/// shard and returns the trained update with a fresh identifier.
///
/// Batches are drawn from `rng`, so the order is a pure function of the
/// stream handed in (callers split one per device and round). A zero
/// learning rate leaves the weights bit-identical.
#[allow(clippy::too_many_arguments)]
pub fn local_train(
    device: &Device,
    model: &[f64],
    spec: &GlobalModelSpec,
    steps: u32,
    lr: f64,
    batch_size: usize,
    round: u64,
    rng: &mut DetRng,
) -> Result<ModelUpdate, FlError> {
    if steps == 0 {
        return Err(FlError::ZeroSteps);
    }
    let shard = &device.dataset;
    if shard.is_empty() {
        return Err(FlError::EmptyShard(device.id));
    }
    let mut weights = model.to_vec();
    let mut pool: Vec<usize> = (0..shard.len()).collect();
    for step in 0..steps as usize {
        let batch = sample_batch(&mut pool, batch_size, rng);
        let (loss, grad) = spec.batch_loss_grad(&weights, shard, &batch);
        if !loss.is_finite() {
            return Err(FlError::Divergence { step });
        }
        if lr != 0.0 {
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= lr * g;
            }
        }
    }
    Ok(ModelUpdate::new(weights, device.id, round, steps)?)
}

/// Draws `batch_size` distinct indices by partial Fisher-Yates, or the
/// whole pool when it is smaller.
fn sample_batch(pool: &mut [usize], batch_size: usize, rng: &mut DetRng) -> Vec<usize> {
    let n = pool.len();
    if n <= batch_size {
        return pool.to_vec();
    }
    for i in 0..batch_size {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool[..batch_size].to_vec()
}

/// Committee-member check of a received update before aggregation: the
/// signature flag gates everything, then sample accuracy on the verifier's
/// shard must reach the threshold (inclusive).
pub fn offchain_verify(
    update: &ModelUpdate,
    verifier_shard: &DatasetShard,
    spec: &GlobalModelSpec,
    threshold: f64,
    sample_size: usize,
    rng: &mut DetRng,
) -> VerifyOutcome {
    if !update.signature_valid {
        return VerifyOutcome::Rejected(VerifyReject::Signature);
    }
    let accuracy = sample_accuracy(&update.weights, verifier_shard, spec, sample_size, rng);
    if accuracy >= threshold {
        VerifyOutcome::Accepted
    } else {
        VerifyOutcome::Rejected(VerifyReject::Quality)
    }
}

/// Accuracy of a model on a random sample of the verifier's shard.
pub fn sample_accuracy(
    weights: &[f64],
    shard: &DatasetShard,
    spec: &GlobalModelSpec,
    sample_size: usize,
    rng: &mut DetRng,
) -> f64 {
    if shard.is_empty() {
        return 0.0;
    }
    let mut pool: Vec<usize> = (0..shard.len()).collect();
    let sample = sample_batch(&mut pool, sample_size, rng);
    spec.accuracy(weights, shard, Some(&sample))
}

/// Data-size-weighted mean of weight vectors: the cluster model after
/// off-chain verification.
pub fn fedavg(updates: &[(&[f64], f64)]) -> Result<Vec<f64>, FlError> {
    if updates.is_empty() {
        return Err(FlError::EmptyAggregation);
    }
    let dim = updates[0].0.len();
    let total: f64 = updates.iter().map(|(_, s)| s).sum();
    if total <= 0.0 {
        return Err(FlError::EmptyAggregation);
    }
    let mut out = vec![0.0; dim];
    for (weights, size) in updates {
        if weights.len() != dim {
            return Err(FlError::DimensionMismatch);
        }
        let share = size / total;
        for (o, &w) in out.iter_mut().zip(*weights) {
            *o += share * w;
        }
    }
    Ok(out)
}
