//! Synthetic dataset generation, Dirichlet partitioning across devices,
//! and CSV import of external feature/label matrices.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::core::{DatasetShard, DetRng};

use super::FlError;

/// Seeded Gaussian-blob classification task: one blob center per class
/// drawn uniformly in `[-spread, spread]^dim`, samples cycling through
/// classes (balanced), each `center + N(0, noise)` per coordinate.
pub fn generate_blobs(
    dim: usize,
    classes: usize,
    samples: usize,
    spread: f64,
    noise: f64,
    rng: &mut DetRng,
) -> DatasetShard {
    let centers: Vec<f64> = (0..classes * dim)
        .map(|_| rng.random_range(-spread..spread))
        .collect();
    let gauss = Normal::new(0.0, noise).expect("valid noise std");
    let mut features = Vec::with_capacity(samples * dim);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let class = i % classes;
        for d in 0..dim {
            features.push(centers[class * dim + d] + gauss.sample(rng));
        }
        labels.push(class as u32);
    }
    DatasetShard::new(features, labels, dim)
}

/// Splits a dataset across devices with per-class Dirichlet(alpha)
/// proportions: for every class, a Dirichlet draw over the devices decides
/// how many of that class's samples each device receives (largest-remainder
/// apportionment keeps the totals exact). Every device is guaranteed at
/// least one sample.
pub fn partition_data(
    dataset: &DatasetShard,
    n_devices: usize,
    alpha: f64,
    rng: &mut DetRng,
) -> Result<Vec<DatasetShard>, FlError> {
    if alpha <= 0.0 {
        return Err(FlError::InvalidDirichletAlpha(alpha));
    }
    if dataset.len() < n_devices {
        return Err(FlError::DatasetTooSmall {
            samples: dataset.len(),
            devices: n_devices,
        });
    }
    let classes: u32 = dataset.labels.iter().copied().max().unwrap_or(0) + 1;
    let gamma = Gamma::new(alpha, 1.0).expect("valid alpha");

    let mut per_device: Vec<Vec<usize>> = vec![Vec::new(); n_devices];
    for class in 0..classes {
        let members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.labels[i] == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        // Dirichlet over devices via normalized Gamma draws.
        let mut draws: Vec<f64> = (0..n_devices).map(|_| gamma.sample(rng).max(1e-12)).collect();
        let total: f64 = draws.iter().sum();
        for d in draws.iter_mut() {
            *d /= total;
        }
        // Largest-remainder apportionment of this class's samples.
        let target = members.len();
        let mut counts: Vec<usize> = draws.iter().map(|p| (p * target as f64) as usize).collect();
        let mut assigned: usize = counts.iter().sum();
        let mut remainders: Vec<(f64, usize)> = draws
            .iter()
            .enumerate()
            .map(|(i, p)| (p * target as f64 - counts[i] as f64, i))
            .collect();
        remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut ri = 0;
        while assigned < target {
            counts[remainders[ri].1] += 1;
            assigned += 1;
            ri = (ri + 1) % n_devices;
        }
        let mut cursor = 0;
        for (device, &count) in counts.iter().enumerate() {
            for &sample in &members[cursor..cursor + count] {
                per_device[device].push(sample);
            }
            cursor += count;
        }
    }

    // Guard: a device with an empty draw takes one sample from the largest.
    for i in 0..n_devices {
        if per_device[i].is_empty() {
            let donor = (0..n_devices)
                .max_by_key(|&j| per_device[j].len())
                .expect("devices exist");
            let moved = per_device[donor].pop().expect("donor has samples");
            per_device[i].push(moved);
        }
    }

    Ok(per_device
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            let mut features = Vec::with_capacity(idx.len() * dataset.dim);
            let mut labels = Vec::with_capacity(idx.len());
            for &i in &idx {
                features.extend_from_slice(dataset.row(i));
                labels.push(dataset.labels[i]);
            }
            DatasetShard::new(features, labels, dataset.dim)
        })
        .collect())
}

/// Loads a dataset from CSV rows of `f_1,...,f_d,label` (no header).
pub fn load_csv(path: &Path) -> Result<DatasetShard, FlError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FlError::DatasetIo(format!("{}: {e}", path.display())))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(FlError::DatasetIo(format!(
                "line {}: expected features and a label",
                lineno + 1
            )));
        }
        let row_dim = fields.len() - 1;
        match dim {
            None => dim = Some(row_dim),
            Some(d) if d != row_dim => {
                return Err(FlError::DatasetIo(format!(
                    "line {}: {} features, expected {}",
                    lineno + 1,
                    row_dim,
                    d
                )))
            }
            _ => {}
        }
        for f in &fields[..row_dim] {
            features.push(f.trim().parse::<f64>().map_err(|e| {
                FlError::DatasetIo(format!("line {}: bad feature {f:?}: {e}", lineno + 1))
            })?);
        }
        labels.push(fields[row_dim].trim().parse::<u32>().map_err(|e| {
            FlError::DatasetIo(format!("line {}: bad label: {e}", lineno + 1))
        })?);
    }
    let dim = dim.ok_or_else(|| FlError::DatasetIo("empty dataset file".into()))?;
    Ok(DatasetShard::new(features, labels, dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let mut rng = DetRng::from_seed(3);
        let a = generate_blobs(4, 10, 200, 3.0, 0.5, &mut rng);
        let mut rng2 = DetRng::from_seed(3);
        let b = generate_blobs(4, 10, 200, 3.0, 0.5, &mut rng2);
        assert_eq!(a, b);
        for c in 0..10u32 {
            assert_eq!(a.labels.iter().filter(|&&l| l == c).count(), 20);
        }
    }

    #[test]
    fn partition_conserves_samples() {
        let mut rng = DetRng::from_seed(9);
        let data = generate_blobs(3, 5, 503, 3.0, 0.5, &mut rng);
        let shards = partition_data(&data, 7, 0.5, &mut rng).unwrap();
        assert_eq!(shards.len(), 7);
        assert_eq!(shards.iter().map(|s| s.len()).sum::<usize>(), 503);
        assert!(shards.iter().all(|s| !s.is_empty()));
    }

    #[test]
    fn near_infinite_alpha_is_close_to_iid() {
        let mut rng = DetRng::from_seed(17);
        let classes = 10;
        let data = generate_blobs(2, classes, 10_000, 3.0, 0.5, &mut rng);
        let shards = partition_data(&data, 10, 1e6, &mut rng).unwrap();
        // Global distribution is uniform: each device's class histogram
        // should be within 2% of 1/classes.
        for shard in &shards {
            for c in 0..classes as u32 {
                let frac = shard.labels.iter().filter(|&&l| l == c).count() as f64
                    / shard.len() as f64;
                assert!(
                    (frac - 0.1).abs() < 0.02,
                    "class {c} fraction {frac} deviates"
                );
            }
        }
    }

    #[test]
    fn low_alpha_concentrates_mass() {
        // Fixed seed: at alpha = 0.2 at least one device puts the majority
        // of its mass on a single class.
        let mut rng = DetRng::from_seed(23);
        let data = generate_blobs(2, 10, 2000, 3.0, 0.5, &mut rng);
        let shards = partition_data(&data, 10, 0.2, &mut rng).unwrap();
        let concentrated = shards.iter().any(|shard| {
            (0..10u32).any(|c| {
                shard.labels.iter().filter(|&&l| l == c).count() as f64
                    > 0.5 * shard.len() as f64
            })
        });
        assert!(concentrated, "expected non-IID concentration at alpha=0.2");
    }

    #[test]
    fn rejects_tiny_dataset() {
        let mut rng = DetRng::from_seed(1);
        let data = generate_blobs(2, 2, 3, 3.0, 0.5, &mut rng);
        assert!(matches!(
            partition_data(&data, 5, 1.0, &mut rng),
            Err(FlError::DatasetTooSmall { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "1.5,-2.0,0\n0.25,3.5,1\n").unwrap();
        let shard = load_csv(&path).unwrap();
        assert_eq!(shard.dim, 2);
        assert_eq!(shard.labels, vec![0, 1]);
        assert_eq!(shard.row(1), &[0.25, 3.5]);
    }
}
