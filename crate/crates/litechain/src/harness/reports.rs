//! Report generators: consensus-security score sampling across simulated
//! networks and the cross-scheme storage comparison.

use rand::Rng;

use crate::clustering::run_game;
use crate::core::{DatasetShard, Device, DetRng, DeviceId, Role};
use crate::secmetric::{security, Committee};

use super::scenario::{Scenario, Scheme};
use super::sim::{run_scenario, SimError};

/// Named reliability ranges used by the security studies.
pub fn reliability_range(name: &str) -> Option<(f64, f64)> {
    match name {
        "medium" => Some((0.33, 0.66)),
        "high" => Some((0.66, 0.99)),
        _ => None,
    }
}

/// Samples consensus-security scores over `trials` random networks.
///
/// Each trial draws device positions and reliabilities from the trial's
/// own stream (shared across schemes, so scheme comparisons are paired):
/// the one-tier schemes score the committee of all devices, the two-tier
/// scheme scores the committee its clustering elects.
pub fn security_report(
    scenario: &Scenario,
    range: (f64, f64),
    trials: usize,
    scheme: Scheme,
) -> Result<Vec<f64>, SimError> {
    let n = scenario.network.devices;
    let root = DetRng::from_seed(scenario.seed);
    let mut scores = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = root.split(&format!("security-trial/{trial}"));
        let devices: Vec<Device> = (0..n)
            .map(|i| Device {
                id: i as DeviceId,
                position: (
                    rng.random_range(0.0..scenario.network.area_side),
                    rng.random_range(0.0..scenario.network.area_side),
                ),
                compute: scenario.network.compute_tiers
                    [i % scenario.network.compute_tiers.len()],
                tx_power: scenario.network.tx_power,
                dataset: DatasetShard::empty(1),
                reliability: if range.0 == range.1 {
                    range.0
                } else {
                    rng.random_range(range.0..range.1)
                },
                reputation: 0.0,
                role: Role::Member,
            })
            .collect();
        let reliabilities: Vec<f64> = match scheme {
            Scheme::Litechain => {
                let outcome = run_game(
                    &devices,
                    &scenario.channel,
                    &scenario.sizes,
                    &scenario.clustering.game_config(),
                )?;
                outcome
                    .partition
                    .committee_members()
                    .iter()
                    .map(|&id| devices[id as usize].reliability)
                    .collect()
            }
            _ => devices.iter().map(|d| d.reliability).collect(),
        };
        let score = security(&Committee::new(reliabilities).expect("valid range"))
            .expect("security evaluates");
        scores.push(score);
    }
    Ok(scores)
}

/// Storage footprint of one scheme after a fixed number of rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageRow {
    pub scheme: Scheme,
    pub rounds: u64,
    pub live_bytes: u64,
    pub total_bytes: u64,
    pub blocks_live: usize,
}

/// Runs every scheme on the same seed for `rounds` rounds and reports the
/// live and cumulative on-chain bytes.
pub fn storage_report(scenario: &Scenario, rounds: u64) -> Result<Vec<StorageRow>, SimError> {
    let mut out = Vec::new();
    for scheme in [Scheme::FlcModel, Scheme::FlcHash, Scheme::Litechain] {
        let mut s = scenario.clone();
        s.scheme = scheme;
        s.stop.max_rounds = rounds;
        s.stop.target_accuracy = 1.1; // never stop early
        let run = run_scenario(&s)?;
        let last = run.metrics.rows.last();
        out.push(StorageRow {
            scheme,
            rounds,
            live_bytes: last.map(|r| r.ledger_live_bytes).unwrap_or(0),
            total_bytes: last.map(|r| r.ledger_total_bytes).unwrap_or(0),
            blocks_live: run.ledger.len(),
        });
    }
    Ok(out)
}

/// Median of a sample (the midpoint of the two central order statistics
/// for even sizes).
pub fn median(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}
