//! Periodic secure update consensus: reputation rewards from the epoch's
//! participation records, a two-phase committee vote, stale-block pruning
//! behind a checkpoint, reliability renormalization, and committee
//! re-election.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::clustering::elect_committee;
use crate::core::{canonical_hash, ClusterId, Device, DeviceId, DetRng, Partition};
use crate::fl::staleness_weight;
use crate::radio::{verify_latency, ChannelParams, SizeProfile};

use super::block::{Block, BlockBody};
use super::cbft::{commit_threshold, ConsensusError};
use super::ledger::Ledger;

/// Parameters of the update consensus.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateParams {
    /// Reputation reward per successfully committed block, split across
    /// the block's verified participants by data contribution.
    pub reward_block: f64,
    /// Reputation reward per consensus participation of a committee
    /// member.
    pub reward_participation: f64,
    /// Reliability floor after normalization.
    pub reliability_floor: f64,
    /// Reliability ceiling after normalization.
    pub reliability_ceiling: f64,
    /// Reliability assigned when every reputation score is zero.
    pub zero_prior: f64,
    /// Attempts before the retry loop surfaces a diagnostic.
    pub retry_cap: usize,
    /// Staleness base weight used when synchronizing model versions.
    pub staleness_base: f64,
    /// Staleness exponent.
    pub staleness_q: f64,
}

impl Default for UpdateParams {
    fn default() -> Self {
        Self {
            reward_block: 100.0,
            reward_participation: 1.0,
            reliability_floor: 0.1,
            reliability_ceiling: 0.99,
            zero_prior: 0.5,
            retry_cap: 10,
            staleness_base: 0.25,
            staleness_q: 0.5,
        }
    }
}

/// Rank-based normalization of raw reputation scores into
/// `[floor, ceiling]`: reliabilities are spread by the score's average
/// rank, so one runaway score cannot squeeze the whole population against
/// the floor (which would starve the threshold votes of honest majorities).
/// Equal positive scores map to the ceiling; an all-zero map falls back to
/// the uniform prior.
pub fn normalize_reputation(
    scores: &BTreeMap<DeviceId, f64>,
    floor: f64,
    ceiling: f64,
    zero_prior: f64,
) -> BTreeMap<DeviceId, f64> {
    let max = scores.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = scores.values().cloned().fold(f64::INFINITY, f64::min);
    let n = scores.len();
    if max <= 0.0 {
        return scores.keys().map(|&dev| (dev, zero_prior)).collect();
    }
    if max == min || n == 1 {
        return scores.keys().map(|&dev| (dev, ceiling)).collect();
    }
    // Average rank per score value: ties share the mean of their ranks.
    let mut sorted: Vec<f64> = scores.values().copied().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    let rank_of = |score: f64| -> f64 {
        let below = sorted.partition_point(|&s| s < score);
        let through = sorted.partition_point(|&s| s <= score);
        (below + through - 1) as f64 / 2.0
    };
    scores
        .iter()
        .map(|(&dev, &score)| {
            let rel = floor + rank_of(score) / (n - 1) as f64 * (ceiling - floor);
            (dev, rel)
        })
        .collect()
}

/// What an update consensus did.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// Vote attempts until success (1 = first committee succeeded).
    pub attempts: usize,
    pub pruned_blocks: usize,
    /// Total reputation granted from block rewards this epoch.
    pub granted_block_rewards: f64,
    /// Total reputation granted from consensus participations.
    pub granted_participation_rewards: f64,
    /// Newly elected committee, one member per cluster.
    pub committee: BTreeMap<ClusterId, DeviceId>,
    /// The synchronized model every cluster restarts from.
    pub synced_model: Vec<f64>,
    /// Simulated seconds spent across all vote attempts.
    pub latency: f64,
}

/// One two-phase threshold vote of the update consensus.
fn vote_round(
    committee: &[&Device],
    forced_no: &BTreeSet<DeviceId>,
    rng: &mut DetRng,
) -> bool {
    let threshold = commit_threshold(committee.len());
    for _phase in 0..2 {
        let yes = committee
            .iter()
            .filter(|m| {
                !forced_no.contains(&m.id) && rng.random_range(0.0..1.0) < m.reliability
            })
            .count();
        if yes < threshold {
            return false;
        }
    }
    true
}

/// Runs the update consensus at the end of an epoch.
///
/// Rewards reputation from the epoch's blocks (block rewards split by data
/// contribution across verified participants) and participation counters,
/// then runs the two-phase vote — reconstituting a random committee on
/// failure — and on success appends a checkpoint, prunes blocks before
/// `window_start_height`, renormalizes reliabilities, synchronizes the
/// model version, and re-elects the committee under the bi-objective rule.
#[allow(clippy::too_many_arguments)]
pub fn update_consensus(
    ledger: &mut Ledger,
    devices: &mut [Device],
    partition: &Partition,
    cluster_models: &BTreeMap<ClusterId, (u64, Vec<f64>)>,
    participations: &BTreeMap<DeviceId, u64>,
    window_start_height: u64,
    now_round: u64,
    sim_time: f64,
    params: &UpdateParams,
    forced_no: &BTreeSet<DeviceId>,
    sp: &SizeProfile,
    cp: &ChannelParams,
    rng: &mut DetRng,
) -> Result<UpdateReport, ConsensusError> {
    if cluster_models.is_empty() {
        return Err(ConsensusError::NoModelsToSync);
    }
    let by_id: BTreeMap<DeviceId, usize> =
        devices.iter().enumerate().map(|(i, d)| (d.id, i)).collect();

    // (a) Aggregate the epoch's latest cluster models into the
    // synchronized version: staleness-weighted mean, normalized so the
    // synced model stays in the convex hull of the inputs.
    let dim = cluster_models.values().next().expect("non-empty").1.len();
    let mut synced = vec![0.0; dim];
    let mut weight_sum = 0.0;
    for (tau, model) in cluster_models.values() {
        let w = staleness_weight(params.staleness_base, params.staleness_q, *tau, now_round);
        weight_sum += w;
        for (s, &m) in synced.iter_mut().zip(model) {
            *s += w * m;
        }
    }
    for s in synced.iter_mut() {
        *s /= weight_sum;
    }

    // (b) Reputation rewards from the epoch's records.
    let mut granted_block = 0.0;
    let mut grants: Vec<(DeviceId, f64)> = Vec::new();
    for block in ledger.blocks() {
        if block.height < window_start_height || !block.body.counts_for_uniqueness() {
            continue;
        }
        let total: u64 = block
            .participation
            .iter()
            .filter(|p| p.verified)
            .map(|p| p.data_size)
            .sum();
        if total == 0 {
            continue;
        }
        for p in &block.participation {
            if p.verified {
                let share = params.reward_block * p.data_size as f64 / total as f64;
                grants.push((p.device, share));
                granted_block += share;
            }
        }
    }
    for (device, share) in grants {
        *ledger.reputation.entry(device).or_insert(0.0) += share;
    }
    let mut granted_participation = 0.0;
    for (&dev, &count) in participations {
        let grant = params.reward_participation * count as f64;
        *ledger.reputation.entry(dev).or_insert(0.0) += grant;
        granted_participation += grant;
    }

    // (c) Two-phase vote, with random committee reconstitution on failure.
    let clusters = partition.clusters();
    let mut committee_ids: Vec<DeviceId> = partition.committee_members();
    let mut attempts = 0usize;
    let mut latency = 0.0;
    let success = loop {
        attempts += 1;
        if attempts > params.retry_cap {
            break false;
        }
        let committee: Vec<&Device> = committee_ids
            .iter()
            .map(|id| &devices[by_id[id]])
            .collect();
        let requester = committee
            .iter()
            .min_by_key(|d| d.id)
            .expect("committee non-empty");
        latency += verify_latency(requester, &committee, sp, cp)?;
        if vote_round(&committee, forced_no, rng) {
            break true;
        }
        // Random reconstitution: one uniform member per cluster.
        committee_ids = clusters
            .values()
            .map(|members| {
                let members: Vec<DeviceId> = members.iter().copied().collect();
                members[rng.random_range(0..members.len())]
            })
            .collect();
    };
    if !success {
        return Err(ConsensusError::RetriesExhausted {
            attempts: attempts - 1,
        });
    }

    // (d) Checkpoint, prune, renormalize, re-elect.
    let checkpoint = Block::new(
        ledger.next_height(),
        ledger.tip().block_hash,
        canonical_hash(&synced)?,
        *committee_ids.iter().min().expect("committee non-empty"),
        now_round,
        Vec::new(),
        sim_time,
        BlockBody::Checkpoint {
            reputation: ledger.reputation.clone(),
        },
    );
    ledger.append(checkpoint)?;
    let pruned = ledger.prune_before(window_start_height);
    ledger.epoch += 1;

    let reliabilities = normalize_reputation(
        &ledger.reputation,
        params.reliability_floor,
        params.reliability_ceiling,
        params.zero_prior,
    );
    for device in devices.iter_mut() {
        if let Some(&rel) = reliabilities.get(&device.id) {
            device.reliability = rel;
        }
    }

    let committee = elect_committee(partition, devices, cp, sp)
        .map_err(|_| ConsensusError::NoModelsToSync)?;

    Ok(UpdateReport {
        attempts,
        pruned_blocks: pruned,
        granted_block_rewards: granted_block,
        granted_participation_rewards: granted_participation,
        committee,
        synced_model: synced,
        latency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::block::Participation;
    use crate::core::{DatasetShard, Role};

    #[test]
    fn normalization_hand_values() {
        // Ranks 0, 1, 2 over three devices span the floor, the midpoint,
        // and the ceiling.
        let scores = BTreeMap::from([(0, 10.0), (1, 20.0), (2, 70.0)]);
        let rels = normalize_reputation(&scores, 0.1, 0.99, 0.5);
        assert!((rels[&0] - 0.1).abs() < 1e-12);
        assert!((rels[&1] - 0.545).abs() < 1e-12);
        assert!((rels[&2] - 0.99).abs() < 1e-12);
    }

    #[test]
    fn normalization_is_outlier_resistant() {
        // One runaway score must not squeeze the rest against the floor.
        let scores: BTreeMap<u32, f64> = (0..10)
            .map(|i| (i, 100.0 + i as f64))
            .chain([(10, 1_000_000.0)])
            .collect();
        let rels = normalize_reputation(&scores, 0.1, 0.99, 0.5);
        let mid = rels[&5];
        assert!(mid > 0.4, "mid-rank device squeezed to {mid}");
        assert_eq!(rels[&10], 0.99);
    }

    #[test]
    fn normalization_ties_share_a_rank() {
        let scores = BTreeMap::from([(0, 5.0), (1, 5.0), (2, 9.0)]);
        let rels = normalize_reputation(&scores, 0.1, 0.99, 0.5);
        assert_eq!(rels[&0], rels[&1]);
        assert!((rels[&0] - (0.1 + 0.25 * 0.89)).abs() < 1e-12);
        assert!((rels[&2] - 0.99).abs() < 1e-12);
    }

    #[test]
    fn single_device_gets_ceiling() {
        let scores = BTreeMap::from([(3, 42.0)]);
        let rels = normalize_reputation(&scores, 0.1, 0.99, 0.5);
        assert_eq!(rels[&3], 0.99);
    }

    #[test]
    fn equal_scores_get_equal_reliability() {
        let scores = BTreeMap::from([(0, 7.0), (1, 7.0)]);
        let rels = normalize_reputation(&scores, 0.1, 0.99, 0.5);
        assert_eq!(rels[&0], rels[&1]);
        assert_eq!(rels[&0], 0.99);
    }

    #[test]
    fn all_zero_scores_fall_back_to_prior() {
        let scores = BTreeMap::from([(0, 0.0), (1, 0.0)]);
        let rels = normalize_reputation(&scores, 0.1, 0.99, 0.5);
        assert_eq!(rels[&0], 0.5);
        assert_eq!(rels[&1], 0.5);
    }

    fn device(id: DeviceId, x: f64, samples: usize) -> Device {
        Device {
            id,
            position: (x, 50.0),
            compute: 1e9,
            tx_power: 0.2,
            dataset: DatasetShard::new(vec![0.0; samples * 2], vec![0; samples], 2),
            reliability: 1.0,
            reputation: 0.0,
            role: Role::Member,
        }
    }

    #[test]
    fn equal_share_split_grants_thirty_each() {
        // Three verified participants with equal data sizes on one block,
        // reward 90: each earns 30.
        let mut devices: Vec<Device> =
            (0..4).map(|i| device(i, 60.0 + 50.0 * i as f64, 4)).collect();
        let partition = Partition::singletons(0..4);
        let mut ledger = Ledger::new(canonical_hash(&[0.0]).unwrap());
        let update = crate::core::ModelUpdate::new(vec![1.0, 2.0], 0, 1, 1).unwrap();
        let block = Block::new(
            ledger.next_height(),
            ledger.tip().block_hash,
            update.identifier,
            0,
            1,
            vec![
                Participation { device: 0, data_size: 4, verified: true },
                Participation { device: 1, data_size: 4, verified: true },
                Participation { device: 2, data_size: 4, verified: true },
            ],
            1.0,
            BlockBody::ModelId,
        );
        ledger.append(block).unwrap();

        let models = BTreeMap::from([(0u32, (1u64, vec![1.0, 2.0]))]);
        let mut rng = DetRng::from_seed(5);
        let params = UpdateParams {
            reward_block: 90.0,
            reward_participation: 0.0,
            ..UpdateParams::default()
        };
        let report = update_consensus(
            &mut ledger,
            &mut devices,
            &partition,
            &models,
            &BTreeMap::new(),
            1,
            2,
            10.0,
            &params,
            &BTreeSet::new(),
            &SizeProfile::default(),
            &ChannelParams::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.attempts, 1);
        assert!((ledger.reputation[&0] - 30.0).abs() < 1e-12);
        assert!((ledger.reputation[&1] - 30.0).abs() < 1e-12);
        assert!((ledger.reputation[&2] - 30.0).abs() < 1e-12);
        assert!((report.granted_block_rewards - 90.0).abs() < 1e-12);
        ledger.verify_chain().unwrap();
    }

    #[test]
    fn block_rewards_dominate_participation_rewards() {
        // A proposing cluster splits the large block reward while a
        // committee member that only voted earns the small per-round one.
        let mut devices: Vec<Device> =
            (0..4).map(|i| device(i, 60.0 + 50.0 * i as f64, 4)).collect();
        let partition = Partition::singletons(0..4);
        let mut ledger = Ledger::new(canonical_hash(&[0.0]).unwrap());
        let update = crate::core::ModelUpdate::new(vec![3.0], 0, 1, 1).unwrap();
        let block = Block::new(
            ledger.next_height(),
            ledger.tip().block_hash,
            update.identifier,
            0,
            1,
            vec![Participation { device: 0, data_size: 4, verified: true }],
            1.0,
            BlockBody::ModelId,
        );
        ledger.append(block).unwrap();

        let params = UpdateParams {
            reward_block: 1000.0,
            reward_participation: 1.0,
            ..UpdateParams::default()
        };
        let participations = BTreeMap::from([(1u32, 20u64)]);
        let models = BTreeMap::from([(0u32, (1u64, vec![3.0]))]);
        let mut rng = DetRng::from_seed(5);
        update_consensus(
            &mut ledger,
            &mut devices,
            &partition,
            &models,
            &participations,
            1,
            2,
            10.0,
            &params,
            &BTreeSet::new(),
            &SizeProfile::default(),
            &ChannelParams::default(),
            &mut rng,
        )
        .unwrap();
        assert!(ledger.reputation[&0] > ledger.reputation[&1]);
        assert_eq!(ledger.reputation[&1], 20.0);
    }

    #[test]
    fn forced_no_majority_exhausts_retries() {
        let mut devices: Vec<Device> =
            (0..4).map(|i| device(i, 60.0 + 50.0 * i as f64, 4)).collect();
        let partition = Partition::singletons(0..4);
        let mut ledger = Ledger::new(canonical_hash(&[0.0]).unwrap());
        let forced: BTreeSet<DeviceId> = (0..4).collect();
        let models = BTreeMap::from([(0u32, (1u64, vec![3.0]))]);
        let mut rng = DetRng::from_seed(5);
        let err = update_consensus(
            &mut ledger,
            &mut devices,
            &partition,
            &models,
            &BTreeMap::new(),
            1,
            2,
            10.0,
            &UpdateParams::default(),
            &forced,
            &SizeProfile::default(),
            &ChannelParams::default(),
            &mut rng,
        )
        .unwrap_err();
        assert_eq!(err, ConsensusError::RetriesExhausted { attempts: 10 });
    }

    #[test]
    fn prune_retains_window_and_checkpoint() {
        let mut devices: Vec<Device> =
            (0..4).map(|i| device(i, 60.0 + 50.0 * i as f64, 4)).collect();
        let partition = Partition::singletons(0..4);
        let mut ledger = Ledger::new(canonical_hash(&[0.0]).unwrap());
        for r in 1..=6u64 {
            let update = crate::core::ModelUpdate::new(vec![r as f64], 0, r, 1).unwrap();
            let block = Block::new(
                ledger.next_height(),
                ledger.tip().block_hash,
                update.identifier,
                0,
                r,
                vec![Participation { device: 0, data_size: 4, verified: true }],
                r as f64,
                BlockBody::ModelId,
            );
            ledger.append(block).unwrap();
        }
        // Epoch window covers heights 4..=6; everything earlier goes.
        let models = BTreeMap::from([(0u32, (6u64, vec![6.0]))]);
        let mut rng = DetRng::from_seed(5);
        let report = update_consensus(
            &mut ledger,
            &mut devices,
            &partition,
            &models,
            &BTreeMap::new(),
            4,
            6,
            60.0,
            &UpdateParams::default(),
            &BTreeSet::new(),
            &SizeProfile::default(),
            &ChannelParams::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.pruned_blocks, 4);
        assert_eq!(ledger.blocks().first().unwrap().height, 4);
        assert!(matches!(
            ledger.tip().body,
            BlockBody::Checkpoint { .. }
        ));
        ledger.verify_chain().unwrap();
        assert_eq!(ledger.epoch, 1);
    }
}
