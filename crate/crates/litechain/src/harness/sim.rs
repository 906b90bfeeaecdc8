//! The simulated round loop: local training, off-chain verification,
//! intra-cluster aggregation, CBFT commits, staleness-aware inter-cluster
//! aggregation, and the periodic update consensus, with the simulated
//! clock advanced by the radio latency model.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use thiserror::Error;

use crate::adversary::{apply_poison, cyclic_flip_map, maybe_replay, select_attackers, AttackKind};
use crate::clustering::{run_game, GameError};
use crate::consensus::{
    cbft_commit, update_consensus, Block, BlockBody, CommitOutcome, ConsensusError, Ledger,
    Participation, RejectReason, UpdateParams,
};
use crate::core::{
    canonical_hash, ClusterId, DatasetShard, Device, DeviceId, DetRng, HashError, Identifier,
    ModelUpdate, Partition, Role,
};
use crate::fl::{
    fedavg, local_train, offchain_verify, partition_data, sample_accuracy, FlError,
    GlobalModelSpec, StalenessAggregator, VerifyOutcome,
};
use crate::radio::{round_latency, RadioError};
use crate::secmetric::{security, Committee};

use super::metrics::{ClusteringSlot, MetricsLog, MetricsRow, RejectCounts, UpdateEvent};
use super::scenario::{Scenario, Scheme};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("placement: could not keep devices {min} m apart in a {side} m square")]
    Placement { min: f64, side: f64 },
    #[error("round {round} / {phase}: {message}")]
    Phase {
        round: u64,
        phase: &'static str,
        message: String,
    },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Fl(#[from] FlError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Hash(#[from] HashError),
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsLog,
    pub ledger: Ledger,
    pub partition: Partition,
    pub devices: Vec<Device>,
}

/// Serialized on-chain footprint of a block. Full-model blocks are split
/// into `block_size`-sized fragments, each paying the fragment overhead.
pub fn accounted_block_bytes(block: &Block, scenario: &Scenario) -> u64 {
    let raw = block.exported_bytes();
    match &block.body {
        BlockBody::FullModel { .. } => {
            let capacity = scenario.sizes.block_size.max(1.0);
            let fragments = (raw as f64 / capacity).ceil() as u64;
            raw + fragments * scenario.protocol.fragment_overhead as u64
        }
        _ => raw,
    }
}

fn live_accounted_bytes(ledger: &Ledger, scenario: &Scenario) -> u64 {
    ledger
        .blocks()
        .iter()
        .map(|b| accounted_block_bytes(b, scenario))
        .sum()
}

/// Builds the device population: placement, compute tiers, shards, and
/// initial reliabilities, all from scheme-independent seed streams. Also
/// returns the held-out test split and the task-published verification
/// pool committee members sample quality checks from.
fn build_devices(
    scenario: &Scenario,
    root: &DetRng,
) -> Result<(Vec<Device>, DatasetShard, DatasetShard), SimError> {
    let n = scenario.network.devices;
    let side = scenario.network.area_side;
    let min_d = scenario.network.placement_min_distance;

    let mut placement_rng = root.split("placement");
    let mut positions: Vec<(f64, f64)> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = false;
        for _attempt in 0..1000 {
            let p = (
                placement_rng.random_range(0.0..side),
                placement_rng.random_range(0.0..side),
            );
            let ok = positions
                .iter()
                .all(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() >= min_d);
            if ok {
                positions.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SimError::Placement { min: min_d, side });
        }
    }

    let mut data_rng = root.split("data");
    let total =
        scenario.data.train_samples + scenario.data.test_samples + scenario.data.verify_samples;
    let pool = crate::fl::generate_blobs(
        scenario.data.input_dim,
        scenario.data.classes,
        total,
        scenario.data.blob_spread,
        scenario.data.blob_noise,
        &mut data_rng,
    );
    let dim = pool.dim;
    let split = scenario.data.train_samples;
    let split_test = split + scenario.data.test_samples;
    let train = DatasetShard::new(
        pool.features[..split * dim].to_vec(),
        pool.labels[..split].to_vec(),
        dim,
    );
    let test = DatasetShard::new(
        pool.features[split * dim..split_test * dim].to_vec(),
        pool.labels[split..split_test].to_vec(),
        dim,
    );
    let verify_pool = DatasetShard::new(
        pool.features[split_test * dim..].to_vec(),
        pool.labels[split_test..].to_vec(),
        dim,
    );

    let mut shard_rng = root.split("shards");
    let shards = partition_data(&train, n, scenario.data.dirichlet_alpha, &mut shard_rng)?;

    let mut rel_rng = root.split("reliability");
    let (lo, hi) = scenario.network.reliability_range;
    let tiers = &scenario.network.compute_tiers;
    let devices = shards
        .into_iter()
        .enumerate()
        .map(|(i, dataset)| Device {
            id: i as DeviceId,
            position: positions[i],
            compute: tiers[i % tiers.len()],
            tx_power: scenario.network.tx_power,
            dataset,
            reliability: if lo == hi {
                lo
            } else {
                rel_rng.random_range(lo..hi)
            },
            reputation: 0.0,
            role: Role::Member,
        })
        .collect();
    Ok((devices, test, verify_pool))
}

/// Runs one scenario to completion and returns the metrics stream plus
/// the final ledger, partition, and device state.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, SimError> {
    scenario.validate().map_err(SimError::Config)?;
    let root = DetRng::from_seed(scenario.seed);
    let (mut devices, test, verify_pool) = build_devices(scenario, &root)?;
    let n = devices.len();

    // Attack wiring. The attack stream is separate from the scenario
    // stream so rate zero leaves the honest run byte-identical.
    let attackers = select_attackers(n, scenario.attack.attacker_rate, scenario.attack.seed);
    let mut replay_rng = DetRng::from_seed(scenario.attack.seed).split("replay");
    let flip_map = scenario
        .attack
        .flip_map
        .clone()
        .unwrap_or_else(|| cyclic_flip_map(scenario.data.classes));
    if scenario.attack.kind == AttackKind::LabelFlip {
        for &a in &attackers {
            let poisoned = apply_poison(&devices[a as usize].dataset, &flip_map);
            devices[a as usize].dataset = poisoned;
        }
    }
    let forced_no: BTreeSet<DeviceId> = if scenario.attack.kind == AttackKind::CommitteeVoteNo {
        attackers.clone()
    } else {
        BTreeSet::new()
    };
    let replay_attack = scenario.attack.kind == AttackKind::Replay;

    // Model and derived parameters.
    let spec = GlobalModelSpec {
        kind: scenario.model_kind(),
        input_dim: scenario.data.input_dim,
        classes: scenario.data.classes,
        init_seed: scenario.seed,
    };
    let init_model = spec.init_weights();
    let mut sizes = scenario.sizes.clone();
    if sizes.model_size <= 0.0 {
        sizes.model_size = (spec.param_count() * 8) as f64;
    }
    let threshold = scenario.quality_threshold();
    let cp = &scenario.channel;

    // Topology.
    let mut clustering_trace: Vec<ClusteringSlot> = Vec::new();
    let mut partition = if scenario.scheme.is_one_tier() {
        Partition::singletons(0..n as DeviceId)
    } else {
        let outcome = run_game(&devices, cp, &sizes, &scenario.clustering.game_config())?;
        clustering_trace = outcome
            .trace
            .iter()
            .map(|t| ClusteringSlot {
                slot: t.slot,
                executed_ops: t.executed.len(),
                welfare: t.welfare,
            })
            .collect();
        outcome.partition
    };
    partition.apply_roles(&mut devices);
    let clusters = partition.clusters();
    let n_clusters = partition.num_clusters;
    let game_welfare = clustering_trace.last().map(|t| t.welfare).unwrap_or(0.0);

    let staleness_base = if scenario.protocol.staleness_base > 0.0 {
        scenario.protocol.staleness_base
    } else {
        1.0 / n_clusters as f64
    };
    let cluster_ids: Vec<ClusterId> = clusters.keys().copied().collect();
    let mut staleness = StalenessAggregator::new(
        &cluster_ids,
        &init_model,
        staleness_base,
        scenario.protocol.staleness_q,
    );

    let update_params = UpdateParams {
        reward_block: scenario.protocol.reward_block,
        reward_participation: scenario.protocol.reward_participation,
        reliability_floor: scenario.protocol.reliability_floor,
        reliability_ceiling: scenario.protocol.reliability_ceiling,
        zero_prior: scenario.protocol.zero_prior,
        retry_cap: scenario.protocol.retry_cap,
        staleness_base,
        staleness_q: scenario.protocol.staleness_q,
    };

    // Ledger and per-run state.
    let mut ledger = Ledger::new(canonical_hash(&init_model)?);
    let mut total_bytes: u64 = accounted_block_bytes(ledger.tip(), scenario);
    let mut epoch_start_height = ledger.next_height();
    let mut cluster_base: BTreeMap<ClusterId, Vec<f64>> = cluster_ids
        .iter()
        .map(|&k| (k, init_model.clone()))
        .collect();
    let mut cluster_models: BTreeMap<ClusterId, (u64, Vec<f64>)> = cluster_ids
        .iter()
        .map(|&k| (k, (0, init_model.clone())))
        .collect();
    let mut global_model = init_model.clone();
    let mut head_seen: BTreeMap<ClusterId, HashSet<Identifier>> =
        cluster_ids.iter().map(|&k| (k, HashSet::new())).collect();
    let mut histories: BTreeMap<DeviceId, Vec<ModelUpdate>> = BTreeMap::new();
    let mut participations: BTreeMap<DeviceId, u64> = BTreeMap::new();

    let mut sim_time = 0.0f64;
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut update_events: Vec<UpdateEvent> = Vec::new();
    let mut update_latency_total = 0.0f64;
    let mut time_to_target: Option<f64> = None;
    let mut rounds_run = 0u64;

    for t in 1..=scenario.stop.max_rounds {
        rounds_run = t;
        let rl = round_latency(&partition, &devices, &sizes, cp)?;
        let tt = rl
            .per_cluster
            .values()
            .map(|c| c.train + c.agg)
            .fold(0.0, f64::max);
        let vt = rl
            .per_cluster
            .values()
            .map(|c| c.verification)
            .fold(0.0, f64::max);
        sim_time += rl.max;

        let mut committed = 0u64;
        let mut rejected = RejectCounts::default();
        let mut offchain_rejected = 0u64;

        let committee_ids = partition.committee_members();
        let committee_refs: Vec<&Device> = committee_ids
            .iter()
            .map(|&id| &devices[id as usize])
            .collect();

        if scenario.scheme.is_one_tier() {
            // One-tier baseline: every device proposes its own update to
            // the committee of all devices; committed updates are averaged
            // into the shared global model.
            let base = global_model.clone();
            let mut accepted: Vec<(Vec<f64>, f64)> = Vec::new();
            for d in 0..n as DeviceId {
                let update = train_device(
                    scenario, &devices, d, &base, &spec, t, &root, replay_attack, &attackers,
                    &mut histories, &mut replay_rng,
                )?;
                let body = match scenario.scheme {
                    Scheme::FlcModel => BlockBody::FullModel {
                        weights: update.weights.clone(),
                    },
                    _ => BlockBody::ModelId,
                };
                let block = Block::new(
                    ledger.next_height(),
                    ledger.tip().block_hash,
                    update.identifier,
                    d,
                    t,
                    vec![Participation {
                        device: d,
                        data_size: devices[d as usize].dataset.len() as u64,
                        verified: true,
                    }],
                    sim_time,
                    body,
                );
                let mut vote_rng = root.split(&format!("consensus/{t}/{d}"));
                let quality_filter = scenario.protocol.quality_filter;
                let mut quality = |verifier: DeviceId, model: &ModelUpdate| {
                    if !quality_filter {
                        return true;
                    }
                    let mut rng = root.split(&format!("cverify/{t}/{d}/{verifier}"));
                    sample_accuracy(
                        &model.weights,
                        &verify_pool,
                        &spec,
                        scenario.protocol.verify_sample,
                        &mut rng,
                    ) >= threshold
                };
                let result = cbft_commit(
                    block,
                    &update,
                    &committee_refs,
                    &mut ledger,
                    &mut quality,
                    &forced_no,
                    scenario.protocol.replay_detection,
                    &sizes,
                    cp,
                    &mut vote_rng,
                )?;
                match result.outcome {
                    CommitOutcome::Committed { .. } => {
                        committed += 1;
                        total_bytes += accounted_block_bytes(ledger.tip(), scenario);
                        accepted
                            .push((update.weights, devices[d as usize].dataset.len() as f64));
                    }
                    CommitOutcome::Rejected { reason } => bump(&mut rejected, reason),
                }
            }
            if !accepted.is_empty() {
                let inputs: Vec<(&[f64], f64)> =
                    accepted.iter().map(|(w, s)| (w.as_slice(), *s)).collect();
                global_model = fedavg(&inputs)?;
            }
        } else {
            // Two-tier protocol: per cluster, off-chain verified FedAvg,
            // one block proposal, then the staleness-aware refresh.
            for (&k, members) in &clusters {
                let head = partition.committee[&k];
                let base = cluster_base[&k].clone();
                let mut accepted: Vec<(Vec<f64>, f64)> = Vec::new();
                let mut participation: Vec<Participation> = Vec::new();
                for &m in members {
                    let update = train_device(
                        scenario, &devices, m, &base, &spec, t, &root, replay_attack,
                        &attackers, &mut histories, &mut replay_rng,
                    )?;
                    let seen = head_seen.get_mut(&k).expect("cluster exists");
                    let verified = if scenario.protocol.replay_detection
                        && seen.contains(&update.identifier)
                    {
                        false
                    } else if scenario.protocol.quality_filter {
                        let mut rng = root.split(&format!("verify/{t}/{k}/{m}"));
                        offchain_verify(
                            &update,
                            &verify_pool,
                            &spec,
                            threshold,
                            scenario.protocol.verify_sample,
                            &mut rng,
                        ) == VerifyOutcome::Accepted
                    } else {
                        update.signature_valid
                    };
                    seen.insert(update.identifier);
                    if !verified {
                        offchain_rejected += 1;
                    }
                    participation.push(Participation {
                        device: m,
                        data_size: devices[m as usize].dataset.len() as u64,
                        verified,
                    });
                    if verified {
                        accepted.push((update.weights, devices[m as usize].dataset.len() as f64));
                    }
                }
                if accepted.is_empty() {
                    // Nothing verified: the cluster skips this round.
                    continue;
                }
                let inputs: Vec<(&[f64], f64)> =
                    accepted.iter().map(|(w, s)| (w.as_slice(), *s)).collect();
                let cluster_weights = fedavg(&inputs)?;
                let cluster_update = ModelUpdate::new(cluster_weights, k, t, 1)?;
                let block = Block::new(
                    ledger.next_height(),
                    ledger.tip().block_hash,
                    cluster_update.identifier,
                    head,
                    t,
                    participation,
                    sim_time,
                    BlockBody::ModelId,
                );
                let mut vote_rng = root.split(&format!("consensus/{t}/{k}"));
                let quality_filter = scenario.protocol.quality_filter;
                let mut quality = |verifier: DeviceId, model: &ModelUpdate| {
                    if !quality_filter {
                        return true;
                    }
                    let mut rng = root.split(&format!("cverify/{t}/{k}/{verifier}"));
                    sample_accuracy(
                        &model.weights,
                        &verify_pool,
                        &spec,
                        scenario.protocol.verify_sample,
                        &mut rng,
                    ) >= threshold
                };
                let result = cbft_commit(
                    block,
                    &cluster_update,
                    &committee_refs,
                    &mut ledger,
                    &mut quality,
                    &forced_no,
                    scenario.protocol.replay_detection,
                    &sizes,
                    cp,
                    &mut vote_rng,
                )?;
                for &member in &committee_ids {
                    *participations.entry(member).or_insert(0) += 1;
                }
                match result.outcome {
                    CommitOutcome::Committed { .. } => {
                        committed += 1;
                        total_bytes += accounted_block_bytes(ledger.tip(), scenario);
                        cluster_models.insert(k, (t, cluster_update.weights.clone()));
                        let refreshed = staleness.refresh(k, &cluster_update.weights, t, t);
                        cluster_base.insert(k, refreshed);
                    }
                    CommitOutcome::Rejected { reason } => bump(&mut rejected, reason),
                }
            }
        }
        drop(committee_refs);

        // Round metrics.
        let eval_model = if scenario.scheme.is_one_tier() {
            global_model.clone()
        } else {
            staleness.current()
        };
        let accuracy = spec.accuracy(&eval_model, &test, None);
        let committee_rels: Vec<f64> = partition
            .committee_members()
            .iter()
            .map(|&id| devices[id as usize].reliability)
            .collect();
        let score = security(&Committee::new(committee_rels).expect("valid reliabilities"))
            .expect("security evaluates");
        rows.push(MetricsRow {
            round: t,
            sim_time,
            test_accuracy: accuracy,
            tt_latency: tt,
            vt_latency: vt,
            round_latency: rl.max,
            ledger_live_bytes: live_accounted_bytes(&ledger, scenario),
            ledger_total_bytes: total_bytes,
            security_score: score,
            committed,
            rejected,
            offchain_rejected,
            welfare: game_welfare,
        });

        if time_to_target.is_none() && accuracy >= scenario.stop.target_accuracy {
            time_to_target = Some(sim_time);
        }

        // Periodic update consensus (two-tier protocol only).
        if !scenario.scheme.is_one_tier() && t % scenario.protocol.update_every == 0 {
            let mut update_rng = root.split(&format!("update/{t}"));
            let report = update_consensus(
                &mut ledger,
                &mut devices,
                &partition,
                &cluster_models,
                &participations,
                epoch_start_height,
                t,
                sim_time,
                &update_params,
                &forced_no,
                &sizes,
                cp,
                &mut update_rng,
            )?;
            sim_time += report.latency;
            update_latency_total += report.latency;
            total_bytes += accounted_block_bytes(ledger.tip(), scenario);
            partition.committee = report.committee.clone();
            partition.apply_roles(&mut devices);
            staleness.resync(&report.synced_model, t);
            for k in &cluster_ids {
                cluster_base.insert(*k, report.synced_model.clone());
                cluster_models.insert(*k, (t, report.synced_model.clone()));
            }
            participations.clear();
            epoch_start_height = ledger.next_height();
            update_events.push(UpdateEvent {
                round: t,
                attempts: report.attempts,
                pruned_blocks: report.pruned_blocks,
                latency: report.latency,
                live_bytes_after: live_accounted_bytes(&ledger, scenario),
            });
        }

        if time_to_target.is_some() {
            break;
        }
    }

    let final_accuracy = rows.last().map(|r| r.test_accuracy).unwrap_or(0.0);
    let metrics = MetricsLog {
        scheme: scenario.scheme,
        seed: scenario.seed,
        n_devices: n,
        n_clusters,
        rows,
        clustering_trace,
        update_events,
        update_latency_total,
        final_accuracy,
        time_to_target,
        rounds_run,
        final_sim_time: sim_time,
    };
    Ok(RunOutput {
        metrics,
        ledger,
        partition,
        devices,
    })
}

fn bump(counts: &mut RejectCounts, reason: RejectReason) {
    match reason {
        RejectReason::Replay => counts.replay += 1,
        RejectReason::Quality => counts.quality += 1,
        RejectReason::Signature => counts.signature += 1,
        RejectReason::Votes => counts.votes += 1,
    }
}

/// Trains one device for the round and applies the replay hook for
/// attackers: with the configured probability a past update is resubmitted
/// verbatim; the fresh update always enters the attacker's history.
#[allow(clippy::too_many_arguments)]
fn train_device(
    scenario: &Scenario,
    devices: &[Device],
    device: DeviceId,
    base: &[f64],
    spec: &GlobalModelSpec,
    round: u64,
    root: &DetRng,
    replay_attack: bool,
    attackers: &BTreeSet<DeviceId>,
    histories: &mut BTreeMap<DeviceId, Vec<ModelUpdate>>,
    replay_rng: &mut DetRng,
) -> Result<ModelUpdate, SimError> {
    let mut train_rng = root.split(&format!("train/{round}/{device}"));
    let fresh = local_train(
        &devices[device as usize],
        base,
        spec,
        scenario.fl.local_steps,
        scenario.fl.learning_rate,
        scenario.fl.batch_size,
        round,
        &mut train_rng,
    )
    .map_err(|e| SimError::Phase {
        round,
        phase: "local_train",
        message: format!("device {device}: {e}"),
    })?;
    if replay_attack && attackers.contains(&device) {
        let history = histories.entry(device).or_default();
        let chosen = maybe_replay(
            fresh.clone(),
            history,
            scenario.attack.replay_rate,
            replay_rng,
        );
        history.push(fresh);
        Ok(chosen)
    } else {
        Ok(fresh)
    }
}
