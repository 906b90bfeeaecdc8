//! Communication-rate, latency, and communication-complexity models for
//! every protocol phase.
//!
//! Conventions: distances in meters, sizes in bytes, compute costs in
//! floating-point operations, rates in bits per second. Terms that divide
//! a payload by a Shannon rate convert bytes to bits; the serial-broadcast
//! term multiplies the broadcast coefficient directly by payload size, so
//! the coefficient's time unit is seconds per size unit of the profile.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{Device, DeviceId, Partition};

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("coincident devices (distance must be positive)")]
    CoincidentDevices,
    #[error("rate between devices {0} and {1} is not positive")]
    SelfLink(DeviceId, DeviceId),
    #[error("unreachable committee member (zero rate from device {0} to {1})")]
    UnreachableCommittee(DeviceId, DeviceId),
    #[error("BFT minimum violated: committee of {0} is smaller than 4")]
    BftMinimumViolated(usize),
    #[error("cluster count K={k} outside 4..=N for N={n}")]
    InfeasibleClusterCount { k: usize, n: usize },
    #[error("partition error: {0}")]
    Partition(#[from] crate::core::PartitionError),
}

/// Wireless channel parameters of the free-space path loss model plus the
/// serial-broadcast coefficient used in consensus phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Bandwidth in hertz.
    pub bandwidth: f64,
    /// Noise power in watts.
    pub noise_power: f64,
    /// Antenna gain (dimensionless).
    pub antenna_gain: f64,
    /// Carrier frequency in hertz.
    pub carrier_freq: f64,
    /// Path loss exponent, at least 2.
    pub pathloss_exp: f64,
    /// Propagation speed in meters per second.
    pub light_speed: f64,
    /// Serial-broadcast coefficient in seconds per payload size unit.
    pub broadcast_coef: f64,
    /// Broadcast timeout in seconds, recorded with the channel model.
    pub broadcast_timeout: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            bandwidth: 1e6,
            noise_power: 1e-10,
            antenna_gain: 4.11,
            carrier_freq: 915e6,
            pathloss_exp: 2.8,
            light_speed: 3e8,
            broadcast_coef: 0.5,
            broadcast_timeout: 300.0,
        }
    }
}

/// Payload sizes (bytes) and computation costs (float ops) of one
/// communication round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeProfile {
    /// Serialized model size in bytes.
    pub model_size: f64,
    /// Block size in bytes.
    pub block_size: f64,
    /// Consensus message size in bytes; at most `block_size`.
    pub msg_size: f64,
    /// Commitment cost in float ops.
    pub commit_cost: f64,
    /// Block generation cost in float ops.
    pub gen_cost: f64,
    /// Training cost in float ops per sample.
    pub train_cost: f64,
    /// Aggregation cost in float ops per aggregated model.
    pub agg_cost: f64,
    /// Verification cost in float ops.
    pub verify_cost: f64,
}

impl Default for SizeProfile {
    fn default() -> Self {
        Self {
            model_size: 1400.0,
            block_size: 2048.0,
            msg_size: 512.0,
            commit_cost: 1e6,
            gen_cost: 1e7,
            train_cost: 1e6,
            agg_cost: 2e5,
            verify_cost: 1e7,
        }
    }
}

impl SizeProfile {
    pub fn check_invariants(&self) -> bool {
        let fields = [
            self.model_size,
            self.block_size,
            self.msg_size,
            self.commit_cost,
            self.gen_cost,
            self.train_cost,
            self.agg_cost,
            self.verify_cost,
        ];
        fields.iter().all(|v| *v >= 0.0) && self.msg_size <= self.block_size
    }
}

const BITS_PER_BYTE: f64 = 8.0;

/// Free-space path loss gain `h = A_d (v / (4 pi f_c d))^{d_e}`.
pub fn channel_gain(distance: f64, cp: &ChannelParams) -> Result<f64, RadioError> {
    if distance <= 0.0 {
        return Err(RadioError::CoincidentDevices);
    }
    let wave = cp.light_speed / (4.0 * PI * cp.carrier_freq * distance);
    Ok(cp.antenna_gain * wave.powf(cp.pathloss_exp))
}

/// Shannon rate `r = b log2(1 + p_i h / sigma^2)` in bits per second from
/// transmitter `i` to receiver `j`.
pub fn comm_rate(i: &Device, j: &Device, cp: &ChannelParams) -> Result<f64, RadioError> {
    if i.id == j.id {
        return Err(RadioError::SelfLink(i.id, j.id));
    }
    let h = channel_gain(i.distance(j), cp)?;
    let snr = i.tx_power * h / cp.noise_power;
    Ok(cp.bandwidth * (1.0 + snr).log2())
}

/// Intra-cluster training latency of a device: local compute over its
/// shard plus the model upload to its committee member. The committee
/// member itself has no upload leg.
pub fn train_latency(
    device: &Device,
    committee_member: &Device,
    sp: &SizeProfile,
    cp: &ChannelParams,
) -> Result<f64, RadioError> {
    let compute = sp.train_cost * device.dataset.len() as f64 / device.compute;
    if device.id == committee_member.id {
        return Ok(compute);
    }
    let rate = comm_rate(device, committee_member, cp)?;
    if rate <= 0.0 {
        return Err(RadioError::UnreachableCommittee(
            device.id,
            committee_member.id,
        ));
    }
    Ok(compute + sp.model_size * BITS_PER_BYTE / rate)
}

/// The five additive terms of the consensus verification latency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyLatencyTerms {
    /// Block generation at the requester.
    pub generate: f64,
    /// Serial broadcast of block, model, and the two vote messages.
    pub broadcast: f64,
    /// Slowest peer verification.
    pub verify: f64,
    /// Slowest commitment computation.
    pub commit: f64,
    /// Slowest vote unicast back to the requester.
    pub reply: f64,
}

impl VerifyLatencyTerms {
    pub fn total(&self) -> f64 {
        self.generate + self.broadcast + self.verify + self.commit + self.reply
    }
}

/// Term-wise verification latency without the BFT size gate; used by the
/// value function of the clustering game, which must price infeasible
/// trial committees too.
pub fn verify_latency_terms(
    requester: &Device,
    committee: &[&Device],
    sp: &SizeProfile,
    cp: &ChannelParams,
) -> Result<VerifyLatencyTerms, RadioError> {
    let k = committee.len() as f64;
    let generate = sp.gen_cost / requester.compute;
    let broadcast =
        cp.broadcast_coef * (k - 1.0) * (sp.block_size + sp.model_size + 2.0 * sp.msg_size);

    let mut verify = 0.0f64;
    let mut commit = 0.0f64;
    let mut reply = 0.0f64;
    for peer in committee {
        commit = commit.max(sp.commit_cost / peer.compute);
        if peer.id == requester.id {
            continue;
        }
        verify = verify.max(sp.verify_cost / peer.compute);
        let rate = comm_rate(peer, requester, cp)?;
        if rate <= 0.0 {
            return Err(RadioError::UnreachableCommittee(peer.id, requester.id));
        }
        reply = reply.max(sp.msg_size * BITS_PER_BYTE / rate);
    }
    Ok(VerifyLatencyTerms {
        generate,
        broadcast,
        verify,
        commit,
        reply,
    })
}

/// Blockchain verification latency of one consensus round requested by a
/// committee member: generation, serial broadcast, peer verification,
/// commitment, and the unicast reply. Committees below the BFT minimum of
/// four are rejected.
pub fn verify_latency(
    requester: &Device,
    committee: &[&Device],
    sp: &SizeProfile,
    cp: &ChannelParams,
) -> Result<f64, RadioError> {
    if committee.len() < 4 {
        return Err(RadioError::BftMinimumViolated(committee.len()));
    }
    Ok(verify_latency_terms(requester, committee, sp, cp)?.total())
}

/// Latency decomposition of one cluster in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterLatency {
    /// Slowest member training-plus-upload leg.
    pub train: f64,
    /// Committee member aggregation over the cluster's models.
    pub agg: f64,
    /// Committee member verification round.
    pub verification: f64,
}

impl ClusterLatency {
    pub fn total(&self) -> f64 {
        self.train + self.agg + self.verification
    }
}

/// Per-device round latency over a whole partition plus the network
/// maximum used as the simulator's per-round wall-clock advance.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLatency {
    pub per_device: BTreeMap<DeviceId, f64>,
    pub per_cluster: BTreeMap<crate::core::ClusterId, ClusterLatency>,
    pub max: f64,
}

/// One-round latency of every device under a partition: the slowest
/// training leg in its cluster plus its committee member's aggregation and
/// verification latency. All devices of a cluster share one value.
pub fn round_latency(
    partition: &Partition,
    devices: &[Device],
    sp: &SizeProfile,
    cp: &ChannelParams,
) -> Result<RoundLatency, RadioError> {
    partition.validate()?;
    let by_id: BTreeMap<DeviceId, &Device> = devices.iter().map(|d| (d.id, d)).collect();
    let committee: Vec<&Device> = partition
        .committee
        .values()
        .map(|id| by_id[id])
        .collect();

    let mut per_device = BTreeMap::new();
    let mut per_cluster = BTreeMap::new();
    let mut max = 0.0f64;
    for (cl, members) in partition.clusters() {
        let head = by_id[&partition.committee[&cl]];
        let mut train = 0.0f64;
        for m in &members {
            train = train.max(train_latency(by_id[m], head, sp, cp)?);
        }
        let agg = sp.agg_cost * members.len() as f64 / head.compute;
        let verification = verify_latency_terms(head, &committee, sp, cp)?.total();
        let lat = ClusterLatency {
            train,
            agg,
            verification,
        };
        let total = lat.total();
        max = max.max(total);
        per_cluster.insert(cl, lat);
        for m in members {
            per_device.insert(m, total);
        }
    }
    Ok(RoundLatency {
        per_device,
        per_cluster,
        max,
    })
}

/// Expected communication complexity (bytes) of one training round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommComplexity {
    /// One-tier peer-to-peer network of N validators.
    pub one_tier: f64,
    /// Two-tier network with K clusters.
    pub clustered: f64,
    /// `one_tier - clustered`.
    pub reduction: f64,
}

/// Expected one-round communication complexity of the flat network:
/// `(N^2 - N) model + (2N^2 + N - 2) block`.
pub fn one_tier_complexity(n: usize, sp: &SizeProfile) -> f64 {
    let nf = n as f64;
    (nf * nf - nf) * sp.model_size + (2.0 * nf * nf + nf - 2.0) * sp.block_size
}

/// Expected one-round communication complexity after clustering into K
/// clusters: `2N model / K + (2K^2 + K - 2) block`.
pub fn clustered_complexity(n: usize, k: usize, sp: &SizeProfile) -> f64 {
    let (nf, kf) = (n as f64, k as f64);
    2.0 * nf * sp.model_size / kf + (2.0 * kf * kf + kf - 2.0) * sp.block_size
}

/// One-round expected communication complexity of both topologies and the
/// reduction from reorganizing. Requires `N >= 4` and `4 <= K <= N`.
pub fn comm_complexity(n: usize, k: usize, sp: &SizeProfile) -> Result<CommComplexity, RadioError> {
    if n < 4 || k < 4 || k > n {
        return Err(RadioError::InfeasibleClusterCount { k, n });
    }
    let one_tier = one_tier_complexity(n, sp);
    let clustered = clustered_complexity(n, k, sp);
    Ok(CommComplexity {
        one_tier,
        clustered,
        reduction: one_tier - clustered,
    })
}

/// Closed form of the maximal expected reduction, attained at K = 4:
/// `model (N^2 - 3N/2) + block (2N^2 + N - 36)`.
pub fn max_reduction(n: usize, sp: &SizeProfile) -> f64 {
    let nf = n as f64;
    sp.model_size * (nf * nf - 1.5 * nf) + sp.block_size * (2.0 * nf * nf + nf - 36.0)
}
