//! Attack injection: label-flip data poisoning, replay of stale model
//! updates, and forced-no committee voters.
//!
//! Attacks draw from their own seed stream so that an attack rate of zero
//! leaves the honest run byte-identical.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{DatasetShard, DetRng, DeviceId, ModelUpdate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    #[default]
    None,
    /// Resubmit a past update verbatim with probability `replay_rate`.
    Replay,
    /// Train on a label-permuted shard.
    LabelFlip,
    /// Vote no in every consensus phase.
    CommitteeVoteNo,
}

/// Scenario-level attack description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Fraction of devices acting maliciously, in [0, 1].
    pub attacker_rate: f64,
    /// Per-round probability that a replay attacker replays.
    pub replay_rate: f64,
    /// Label permutation; `None` means `(label + 1) mod L`.
    pub flip_map: Option<Vec<u32>>,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            kind: AttackKind::None,
            attacker_rate: 0.0,
            replay_rate: 0.5,
            flip_map: None,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.attacker_rate) {
            return Err(format!("attacker_rate {} outside [0,1]", self.attacker_rate));
        }
        if !(0.0..=1.0).contains(&self.replay_rate) {
            return Err(format!("replay_rate {} outside [0,1]", self.replay_rate));
        }
        if let Some(map) = &self.flip_map {
            let mut seen = vec![false; map.len()];
            for &target in map {
                if target as usize >= map.len() || seen[target as usize] {
                    return Err("flip_map is not a permutation".into());
                }
                seen[target as usize] = true;
            }
        }
        Ok(())
    }
}

/// The default label permutation `(label + 1) mod classes`.
pub fn cyclic_flip_map(classes: usize) -> Vec<u32> {
    (0..classes as u32).map(|l| (l + 1) % classes as u32).collect()
}

/// `floor(rate * n)` attackers chosen uniformly without replacement from
/// the attack seed. Rate zero consumes nothing and selects nobody.
pub fn select_attackers(n_devices: usize, rate: f64, seed: u64) -> BTreeSet<DeviceId> {
    let count = (rate * n_devices as f64).floor() as usize;
    if count == 0 {
        return BTreeSet::new();
    }
    let mut rng = DetRng::from_seed(seed).split("attacker-selection");
    let mut ids: Vec<DeviceId> = (0..n_devices as DeviceId).collect();
    for i in 0..count {
        let j = rng.random_range(i..n_devices);
        ids.swap(i, j);
    }
    ids[..count].iter().copied().collect()
}

/// Remaps every label through the permutation; features untouched.
pub fn apply_poison(shard: &DatasetShard, flip_map: &[u32]) -> DatasetShard {
    DatasetShard::new(
        shard.features.clone(),
        shard
            .labels
            .iter()
            .map(|&l| flip_map[l as usize])
            .collect(),
        shard.dim,
    )
}

/// With probability `replay_rate` (and a non-empty history) returns a past
/// update verbatim, stale identifier and original signature included;
/// otherwise the fresh one.
pub fn maybe_replay(
    fresh: ModelUpdate,
    history: &[ModelUpdate],
    replay_rate: f64,
    rng: &mut DetRng,
) -> ModelUpdate {
    if history.is_empty() || replay_rate <= 0.0 {
        return fresh;
    }
    if rng.random_range(0.0..1.0) < replay_rate {
        let pick = rng.random_range(0..history.len());
        history[pick].clone()
    } else {
        fresh
    }
}
