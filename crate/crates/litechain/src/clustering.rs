//! Distributed coalition-game clustering.
//!
//! Starting from singletons, devices switch clusters to raise the value
//! `v = S / T - c` of the clusters they touch: `S` is the committee's
//! consensus-security score, `T` the cluster's one-round latency, and `c`
//! a large penalty when a trial partition breaks the BFT feasibility bound
//! `4 <= K <= N`. The gain of a switch is the exact change in social
//! welfare it causes (the marginal-contribution gap of the two affected
//! clusters plus the induced drift of every other cluster's value through
//! the shared committee), so executed switches strictly increase welfare,
//! no partition repeats, and termination implies Nash stability.
//!
//! The game is a single deterministic sequence of slots. Within a slot,
//! clusters act in ascending id order: each available cluster's
//! least-visited member proposes its best positive-gain switch to an
//! available neighbor cluster, the touched clusters become occupied, and
//! queued switches execute at slot end after revalidation against the
//! live state.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use crate::core::{sha256, ClusterId, Device, DeviceId, Partition};
use crate::radio::{comm_rate, ChannelParams, RadioError, SizeProfile};
use crate::secmetric::{security, Committee};

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("the game needs at least 4 devices, got {0}")]
    TooFewDevices(usize),
    #[error("device ids must be contiguous 0..N")]
    NonContiguousIds,
    #[error("unknown device {0}")]
    UnknownDevice(DeviceId),
    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),
    #[error("device {device} is not in cluster {cluster}")]
    NotInCluster { device: DeviceId, cluster: ClusterId },
    #[error("switch source equals destination cluster {0}")]
    DegenerateSwitch(ClusterId),
    #[error("partition covers {covered} of {total} devices")]
    IncompletePartition { covered: usize, total: usize },
    #[error("slot cap of {cap} exceeded without termination")]
    SlotCapExceeded { cap: usize },
    #[error("social welfare failed to increase at slot {slot}")]
    WelfareRegression { slot: usize },
    #[error("partition revisited at slot {slot}")]
    PartitionRevisited { slot: usize },
    #[error(transparent)]
    Radio(#[from] RadioError),
}

/// Knobs of the clustering game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    /// Penalty for infeasible trial partitions, as a multiple of the
    /// largest cluster utility observed so far (floored at 1).
    pub penalty_scale: f64,
    /// Minimum rate (bit/s) for a cluster to count as a neighbor of a
    /// device; zero makes every cluster a neighbor.
    pub neighbor_min_rate: f64,
    /// Safety net on the slot loop; termination is expected far earlier.
    pub slot_cap: usize,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            penalty_scale: 1e6,
            neighbor_min_rate: 0.0,
            slot_cap: 10_000,
        }
    }
}

/// A proposed or executed switch of one device between clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchOp {
    pub device: DeviceId,
    pub from_cluster: ClusterId,
    pub to_cluster: ClusterId,
    pub gain: f64,
}

/// Per-slot trace record: the executed switches and the social welfare
/// after the slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTrace {
    pub slot: usize,
    pub executed: Vec<SwitchOp>,
    pub welfare: f64,
}

/// Result of a full game run.
#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    pub partition: Partition,
    pub trace: Vec<SlotTrace>,
    /// Final social welfare (sum of cluster utilities).
    pub welfare: f64,
    pub slots: usize,
}

// ---------------------------------------------------------------------------
// Network view shared by the game and the public value/gain functions.
// ---------------------------------------------------------------------------

/// Devices plus the precomputed pairwise rate matrix the value function
/// reads.
struct NetView<'a> {
    devices: &'a [Device],
    sp: &'a SizeProfile,
    broadcast_coef: f64,
    rates: Vec<f64>,
    n: usize,
}

const BITS_PER_BYTE: f64 = 8.0;

impl<'a> NetView<'a> {
    fn new(
        devices: &'a [Device],
        cp: &'a ChannelParams,
        sp: &'a SizeProfile,
    ) -> Result<Self, GameError> {
        let n = devices.len();
        for (idx, d) in devices.iter().enumerate() {
            if d.id as usize != idx {
                return Err(GameError::NonContiguousIds);
            }
        }
        let mut rates = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    rates[i * n + j] = comm_rate(&devices[i], &devices[j], cp)?;
                }
            }
        }
        Ok(Self {
            devices,
            sp,
            broadcast_coef: cp.broadcast_coef,
            rates,
            n,
        })
    }

    fn rate(&self, from: DeviceId, to: DeviceId) -> f64 {
        self.rates[from as usize * self.n + to as usize]
    }

    fn device(&self, id: DeviceId) -> &Device {
        &self.devices[id as usize]
    }

    /// One-round latency of a cluster: slowest member training leg, head
    /// aggregation, and the head's verification round across the committee.
    fn cluster_latency(&self, members: &[DeviceId], head: DeviceId, committee: &[DeviceId]) -> f64 {
        let sp = self.sp;
        let head_dev = self.device(head);
        let mut train_max = 0.0f64;
        for &m in members {
            let d = self.device(m);
            let mut t = sp.train_cost * d.dataset.len() as f64 / d.compute;
            if m != head {
                t += sp.model_size * BITS_PER_BYTE / self.rate(m, head);
            }
            train_max = train_max.max(t);
        }
        let agg = sp.agg_cost * members.len() as f64 / head_dev.compute;

        let k = committee.len() as f64;
        let generate = sp.gen_cost / head_dev.compute;
        let broadcast =
            self.broadcast_coef * (k - 1.0) * (sp.block_size + sp.model_size + 2.0 * sp.msg_size);
        let mut verify = 0.0f64;
        let mut commit = 0.0f64;
        let mut reply = 0.0f64;
        for &h in committee {
            let peer = self.device(h);
            commit = commit.max(sp.commit_cost / peer.compute);
            if h != head {
                verify = verify.max(sp.verify_cost / peer.compute);
                reply = reply.max(sp.msg_size * BITS_PER_BYTE / self.rate(h, head));
            }
        }
        train_max + agg + generate + broadcast + verify + commit + reply
    }
}

/// Per-angular-frequency partial products for security evaluation with one
/// member swapped; turns an O(K^2) score into O(K) per candidate during
/// committee elections.
struct SecurityPartial {
    k_total: usize,
    omega: f64,
    /// Per l: product over the base members of (1 - q + q e^{i w l}).
    partial: Vec<(f64, f64)>,
    /// Per l: sum over M of e^{-i w l M}.
    geo: Vec<(f64, f64)>,
}

impl SecurityPartial {
    fn new(base_rels: &[f64], k_total: usize) -> Self {
        debug_assert_eq!(base_rels.len() + 1, k_total);
        let budget = (k_total - 1) / 3;
        let omega = 2.0 * std::f64::consts::PI / (k_total as f64 + 1.0);
        let mut partial = Vec::with_capacity(k_total + 1);
        let mut geo = Vec::with_capacity(k_total + 1);
        for l in 0..=k_total {
            let theta = omega * l as f64;
            let (sin_t, cos_t) = theta.sin_cos();
            let mut pre = 1.0f64;
            let mut pim = 0.0f64;
            for &p in base_rels {
                let q = 1.0 - p;
                let f_re = 1.0 - q + q * cos_t;
                let f_im = q * sin_t;
                let re = pre * f_re - pim * f_im;
                pim = pre * f_im + pim * f_re;
                pre = re;
            }
            let mut g_re = 0.0f64;
            let mut g_im = 0.0f64;
            for m in 0..=budget {
                let phi = theta * m as f64;
                g_re += phi.cos();
                g_im -= phi.sin();
            }
            partial.push((pre, pim));
            geo.push((g_re, g_im));
        }
        Self {
            k_total,
            omega,
            partial,
            geo,
        }
    }

    /// Security score of the base committee plus one candidate of
    /// reliability `p`.
    fn with_candidate(&self, p: f64) -> f64 {
        let q = 1.0 - p;
        let mut sum_re = 0.0f64;
        for l in 0..=self.k_total {
            let theta = self.omega * l as f64;
            let (sin_t, cos_t) = theta.sin_cos();
            let f_re = 1.0 - q + q * cos_t;
            let f_im = q * sin_t;
            let (pre, pim) = self.partial[l];
            let prod_re = pre * f_re - pim * f_im;
            let prod_im = pre * f_im + pim * f_re;
            let (g_re, g_im) = self.geo[l];
            sum_re += g_re * prod_re - g_im * prod_im;
        }
        (sum_re / (self.k_total as f64 + 1.0)).clamp(0.0, 1.0)
    }
}

fn security_of(rels: &[f64]) -> f64 {
    let committee = Committee::new(rels.to_vec()).expect("reliabilities validated at build");
    security(&committee).expect("security evaluation")
}

// ---------------------------------------------------------------------------
// Game engine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Cluster {
    /// Sorted member device ids.
    members: Vec<DeviceId>,
    head: DeviceId,
}

struct Engine<'a> {
    net: NetView<'a>,
    cfg: &'a GameConfig,
    clusters: BTreeMap<ClusterId, Cluster>,
    cluster_of: Vec<ClusterId>,
    visits: Vec<u64>,
    /// Gain of the proposal made in the previous slot, if unresolved.
    last_gain: Vec<Option<f64>>,
    welfare_u: f64,
    welfare_v: f64,
    max_utility: f64,
}

/// Full evaluation of a trial partition: the welfare it reaches and the
/// heads elected for the touched clusters.
struct TrialEval {
    gain: f64,
    welfare_u: f64,
    welfare_v: f64,
    max_utility: f64,
    src_head: Option<DeviceId>,
    dst_head: DeviceId,
}

impl<'a> Engine<'a> {
    fn from_singletons(
        devices: &'a [Device],
        cp: &'a ChannelParams,
        sp: &'a SizeProfile,
        cfg: &'a GameConfig,
    ) -> Result<Self, GameError> {
        let net = NetView::new(devices, cp, sp)?;
        let mut clusters = BTreeMap::new();
        let mut cluster_of = Vec::with_capacity(devices.len());
        for d in devices {
            clusters.insert(
                d.id as ClusterId,
                Cluster {
                    members: vec![d.id],
                    head: d.id,
                },
            );
            cluster_of.push(d.id as ClusterId);
        }
        let mut engine = Self {
            net,
            cfg,
            clusters,
            cluster_of,
            visits: vec![0; devices.len()],
            last_gain: vec![None; devices.len()],
            welfare_u: 0.0,
            welfare_v: 0.0,
            max_utility: 1.0,
        };
        let (u, v, max_u) = engine.welfare_of_current();
        engine.welfare_u = u;
        engine.welfare_v = v;
        engine.max_utility = engine.max_utility.max(max_u);
        Ok(engine)
    }

    /// Restores an engine around an existing partition (for audits and the
    /// public gain/preference functions).
    fn from_partition(
        partition: &Partition,
        devices: &'a [Device],
        cp: &'a ChannelParams,
        sp: &'a SizeProfile,
        cfg: &'a GameConfig,
    ) -> Result<Self, GameError> {
        let net = NetView::new(devices, cp, sp)?;
        if partition.assignments.len() != devices.len() {
            return Err(GameError::IncompletePartition {
                covered: partition.assignments.len(),
                total: devices.len(),
            });
        }
        let mut clusters: BTreeMap<ClusterId, Cluster> = BTreeMap::new();
        let mut cluster_of = vec![0; devices.len()];
        for (&dev, &cl) in &partition.assignments {
            if dev as usize >= devices.len() {
                return Err(GameError::UnknownDevice(dev));
            }
            cluster_of[dev as usize] = cl;
            clusters
                .entry(cl)
                .or_insert_with(|| Cluster {
                    members: Vec::new(),
                    head: dev,
                })
                .members
                .push(dev);
        }
        for (cl, cluster) in clusters.iter_mut() {
            cluster.members.sort_unstable();
            match partition.committee.get(cl) {
                Some(&head) => cluster.head = head,
                None => return Err(GameError::UnknownCluster(*cl)),
            }
        }
        let mut engine = Self {
            net,
            cfg,
            clusters,
            cluster_of,
            visits: vec![0; devices.len()],
            last_gain: vec![None; devices.len()],
            welfare_u: 0.0,
            welfare_v: 0.0,
            max_utility: 1.0,
        };
        let (u, v, max_u) = engine.welfare_of_current();
        engine.welfare_u = u;
        engine.welfare_v = v;
        engine.max_utility = engine.max_utility.max(max_u);
        Ok(engine)
    }

    fn penalty(&self) -> f64 {
        self.cfg.penalty_scale * self.max_utility.max(1.0)
    }

    fn committee_ids(&self) -> Vec<DeviceId> {
        self.clusters.values().map(|c| c.head).collect()
    }

    /// Welfare of the current partition: `(sum of u, sum of v, max u)`.
    fn welfare_of_current(&self) -> (f64, f64, f64) {
        let committee = self.committee_ids();
        let rels: Vec<f64> = committee
            .iter()
            .map(|&h| self.net.device(h).reliability)
            .collect();
        let s = security_of(&rels);
        let mut total_u = 0.0;
        let mut max_u = 0.0f64;
        for cluster in self.clusters.values() {
            let t = self
                .net
                .cluster_latency(&cluster.members, cluster.head, &committee)
                .max(f64::MIN_POSITIVE);
            let u = s / t;
            total_u += u;
            max_u = max_u.max(u);
        }
        let feasible = (4..=self.net.n).contains(&self.clusters.len());
        let v = if feasible {
            total_u
        } else {
            total_u - self.clusters.len() as f64 * self.penalty()
        };
        (total_u, v, max_u)
    }

    /// Elects the head of a cluster: the member whose headship maximizes
    /// the cluster's utility `S(committee with that member) / T(cluster)`,
    /// ties resolved toward the lowest device id. `others` are the heads
    /// of every other cluster.
    fn elect(&self, members: &[DeviceId], others: &[DeviceId]) -> DeviceId {
        debug_assert!(!members.is_empty());
        if members.len() == 1 {
            return members[0];
        }
        let base_rels: Vec<f64> = others
            .iter()
            .map(|&h| self.net.device(h).reliability)
            .collect();
        let swap = SecurityPartial::new(&base_rels, others.len() + 1);
        let mut committee: Vec<DeviceId> = Vec::with_capacity(others.len() + 1);
        let mut best: Option<(f64, DeviceId)> = None;
        for &candidate in members {
            committee.clear();
            committee.extend_from_slice(others);
            committee.push(candidate);
            let s = swap.with_candidate(self.net.device(candidate).reliability);
            let t = self
                .net
                .cluster_latency(members, candidate, &committee)
                .max(f64::MIN_POSITIVE);
            let u = s / t;
            match best {
                Some((bu, _)) if u <= bu => {}
                _ => best = Some((u, candidate)),
            }
        }
        best.expect("non-empty members").1
    }

    /// Evaluates moving `device` from `src` to `dst` without touching the
    /// live state. The gain is the exact welfare change; heads of the two
    /// touched clusters are re-derived (source first, then destination).
    fn evaluate_op(&self, device: DeviceId, src: ClusterId, dst: ClusterId) -> TrialEval {
        let src_cluster = &self.clusters[&src];
        let dst_cluster = &self.clusters[&dst];

        let src_members: Vec<DeviceId> = src_cluster
            .members
            .iter()
            .copied()
            .filter(|&m| m != device)
            .collect();
        let mut dst_members: Vec<DeviceId> = dst_cluster.members.clone();
        let pos = dst_members.binary_search(&device).unwrap_err();
        dst_members.insert(pos, device);

        // Heads of untouched clusters.
        let others: Vec<DeviceId> = self
            .clusters
            .iter()
            .filter(|(&cl, _)| cl != src && cl != dst)
            .map(|(_, c)| c.head)
            .collect();

        // Source election first (destination stands in with its current
        // head), then destination with the new source head in context.
        let src_head = if src_members.is_empty() {
            None
        } else {
            let mut ctx = others.clone();
            ctx.push(dst_cluster.head);
            Some(self.elect(&src_members, &ctx))
        };
        let dst_head = {
            let mut ctx = others.clone();
            if let Some(h) = src_head {
                ctx.push(h);
            }
            self.elect(&dst_members, &ctx)
        };

        // Full trial committee and welfare, clusters in ascending id order.
        let k_trial = self.clusters.len() - usize::from(src_head.is_none());
        let mut committee: Vec<DeviceId> = Vec::with_capacity(k_trial);
        for (&cl, cluster) in &self.clusters {
            if cl == src {
                if let Some(h) = src_head {
                    committee.push(h);
                }
            } else if cl == dst {
                committee.push(dst_head);
            } else {
                committee.push(cluster.head);
            }
        }
        let rels: Vec<f64> = committee
            .iter()
            .map(|&h| self.net.device(h).reliability)
            .collect();
        let s = security_of(&rels);

        let mut total_u = 0.0;
        let mut max_u = 0.0f64;
        for (&cl, cluster) in &self.clusters {
            let (members, head): (&[DeviceId], DeviceId) = if cl == src {
                match src_head {
                    Some(h) => (&src_members, h),
                    None => continue,
                }
            } else if cl == dst {
                (&dst_members, dst_head)
            } else {
                (&cluster.members, cluster.head)
            };
            let t = self
                .net
                .cluster_latency(members, head, &committee)
                .max(f64::MIN_POSITIVE);
            let u = s / t;
            total_u += u;
            max_u = max_u.max(u);
        }

        let max_utility = self.max_utility.max(max_u);
        let feasible = (4..=self.net.n).contains(&k_trial);
        let v = if feasible {
            total_u
        } else {
            total_u - k_trial as f64 * self.cfg.penalty_scale * max_utility.max(1.0)
        };
        TrialEval {
            gain: v - self.welfare_v,
            welfare_u: total_u,
            welfare_v: v,
            max_utility,
            src_head,
            dst_head,
        }
    }

    /// Neighbor clusters of a device: clusters other than its own holding
    /// at least one device reachable at the configured minimum rate.
    fn neighbor_clusters(&self, device: DeviceId) -> Vec<ClusterId> {
        let own = self.cluster_of[device as usize];
        self.clusters
            .iter()
            .filter(|(&cl, cluster)| {
                cl != own
                    && cluster
                        .members
                        .iter()
                        .any(|&m| self.net.rate(device, m) >= self.cfg.neighbor_min_rate)
            })
            .map(|(&cl, _)| cl)
            .collect()
    }

    /// Ordered positive-gain preference list of a device over its neighbor
    /// clusters (descending gain, ties toward the lower cluster id).
    fn preference_list(&self, device: DeviceId) -> Vec<SwitchOp> {
        let own = self.cluster_of[device as usize];
        let mut prefs: Vec<SwitchOp> = Vec::new();
        for target in self.neighbor_clusters(device) {
            let eval = self.evaluate_op(device, own, target);
            if eval.gain > 0.0 {
                prefs.push(SwitchOp {
                    device,
                    from_cluster: own,
                    to_cluster: target,
                    gain: eval.gain,
                });
            }
        }
        prefs.sort_by(|a, b| {
            b.gain
                .partial_cmp(&a.gain)
                .expect("finite gains")
                .then(a.to_cluster.cmp(&b.to_cluster))
        });
        prefs
    }

    /// Applies a previously evaluated switch.
    fn apply(&mut self, op: &SwitchOp, eval: &TrialEval) {
        let src = op.from_cluster;
        let dst = op.to_cluster;
        {
            let cluster = self.clusters.get_mut(&src).expect("live source");
            cluster.members.retain(|&m| m != op.device);
        }
        if self.clusters[&src].members.is_empty() {
            self.clusters.remove(&src);
        } else {
            let head = eval.src_head.expect("head for non-empty source");
            self.clusters.get_mut(&src).expect("live source").head = head;
        }
        {
            let cluster = self.clusters.get_mut(&dst).expect("live destination");
            let pos = cluster.members.binary_search(&op.device).unwrap_err();
            cluster.members.insert(pos, op.device);
            cluster.head = eval.dst_head;
        }
        self.cluster_of[op.device as usize] = dst;
        self.welfare_u = eval.welfare_u;
        self.welfare_v = eval.welfare_v;
        self.max_utility = eval.max_utility;
    }

    /// Canonical digest of the membership structure for repeat detection.
    fn partition_digest(&self) -> [u8; 32] {
        let mut bytes = Vec::with_capacity(self.net.n * 4 + self.clusters.len() * 4);
        let mut groups: Vec<&Vec<DeviceId>> =
            self.clusters.values().map(|c| &c.members).collect();
        groups.sort_by_key(|m| m[0]);
        for members in groups {
            bytes.extend_from_slice(&(members.len() as u32).to_le_bytes());
            for &m in members {
                bytes.extend_from_slice(&m.to_le_bytes());
            }
        }
        sha256(&bytes)
    }

    /// All positive-gain single-device switches under the current state.
    fn positive_switches(&self, neighbor_limited: bool) -> Vec<SwitchOp> {
        let mut found = Vec::new();
        for device in 0..self.net.n as DeviceId {
            let own = self.cluster_of[device as usize];
            let targets: Vec<ClusterId> = if neighbor_limited {
                self.neighbor_clusters(device)
            } else {
                self.clusters.keys().copied().filter(|&c| c != own).collect()
            };
            for target in targets {
                let eval = self.evaluate_op(device, own, target);
                if eval.gain > 0.0 {
                    found.push(SwitchOp {
                        device,
                        from_cluster: own,
                        to_cluster: target,
                        gain: eval.gain,
                    });
                }
            }
        }
        found
    }

    fn to_partition(&self) -> Partition {
        // Relabel clusters 0..K-1 in ascending order of their smallest
        // member.
        let mut groups: Vec<(&Vec<DeviceId>, DeviceId)> = self
            .clusters
            .values()
            .map(|c| (&c.members, c.head))
            .collect();
        groups.sort_by_key(|(members, _)| members[0]);
        let mut assignments = BTreeMap::new();
        let mut committee = BTreeMap::new();
        for (idx, (members, head)) in groups.iter().enumerate() {
            let cl = idx as ClusterId;
            committee.insert(cl, *head);
            for &m in members.iter() {
                assignments.insert(m, cl);
            }
        }
        Partition {
            assignments,
            committee,
            num_clusters: self.clusters.len(),
        }
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Value `v = u - c` of one cluster inside a partition whose committee is
/// given: `u = S(committee) / T(cluster)`; the cost `c` is zero when the
/// committee satisfies the BFT bound `4 <= K` and `penalty` otherwise. An
/// empty cluster is worth exactly zero.
pub fn cluster_value(
    members: &[DeviceId],
    committee: &[DeviceId],
    devices: &[Device],
    cp: &ChannelParams,
    sp: &SizeProfile,
    penalty: f64,
) -> Result<f64, GameError> {
    if members.is_empty() {
        return Ok(0.0);
    }
    let net = NetView::new(devices, cp, sp)?;
    let head = *members
        .iter()
        .find(|m| committee.contains(m))
        .ok_or(GameError::UnknownCluster(0))?;
    let rels: Vec<f64> = committee
        .iter()
        .map(|&h| net.device(h).reliability)
        .collect();
    let s = security_of(&rels);
    let t = net
        .cluster_latency(members, head, committee)
        .max(f64::MIN_POSITIVE);
    let u = s / t;
    let feasible = (4..=devices.len()).contains(&committee.len());
    Ok(if feasible { u } else { u - penalty })
}

/// Exact welfare gain of switching `device` into `to_cluster` under the
/// given partition.
pub fn switch_gain(
    partition: &Partition,
    devices: &[Device],
    cp: &ChannelParams,
    sp: &SizeProfile,
    cfg: &GameConfig,
    device: DeviceId,
    to_cluster: ClusterId,
) -> Result<f64, GameError> {
    let engine = Engine::from_partition(partition, devices, cp, sp, cfg)?;
    let own = partition
        .cluster_of(device)
        .ok_or(GameError::UnknownDevice(device))?;
    if !partition.committee.contains_key(&to_cluster) {
        return Err(GameError::UnknownCluster(to_cluster));
    }
    if own == to_cluster {
        return Err(GameError::DegenerateSwitch(own));
    }
    Ok(engine.evaluate_op(device, own, to_cluster).gain)
}

/// Ordered preference list of a device and the switch it would propose
/// (every target counts as available).
pub fn update_preferences(
    partition: &Partition,
    devices: &[Device],
    cp: &ChannelParams,
    sp: &SizeProfile,
    cfg: &GameConfig,
    device: DeviceId,
) -> Result<(Vec<SwitchOp>, Option<SwitchOp>), GameError> {
    let engine = Engine::from_partition(partition, devices, cp, sp, cfg)?;
    if device as usize >= devices.len() {
        return Err(GameError::UnknownDevice(device));
    }
    let prefs = engine.preference_list(device);
    let proposal = prefs.first().cloned();
    Ok((prefs, proposal))
}

/// Re-elects the committee member of every cluster of a partition under
/// the bi-objective rule (one ascending pass, live context updates).
pub fn elect_committee(
    partition: &Partition,
    devices: &[Device],
    cp: &ChannelParams,
    sp: &SizeProfile,
) -> Result<BTreeMap<ClusterId, DeviceId>, GameError> {
    let cfg = GameConfig::default();
    let mut engine = Engine::from_partition(partition, devices, cp, sp, &cfg)?;
    let ids: Vec<ClusterId> = engine.clusters.keys().copied().collect();
    for cl in ids {
        let members = engine.clusters[&cl].members.clone();
        let others: Vec<DeviceId> = engine
            .clusters
            .iter()
            .filter(|(&c, _)| c != cl)
            .map(|(_, c)| c.head)
            .collect();
        let head = engine.elect(&members, &others);
        engine.clusters.get_mut(&cl).expect("live cluster").head = head;
    }
    Ok(engine
        .clusters
        .iter()
        .map(|(&cl, c)| (cl, c.head))
        .collect())
}

/// Audits a partition for Nash stability: returns every positive-gain
/// single-device switch (empty means stable).
pub fn nash_audit(
    partition: &Partition,
    devices: &[Device],
    cp: &ChannelParams,
    sp: &SizeProfile,
    cfg: &GameConfig,
) -> Result<Vec<SwitchOp>, GameError> {
    let engine = Engine::from_partition(partition, devices, cp, sp, cfg)?;
    Ok(engine.positive_switches(false))
}

/// Runs the coalition game from singletons to a Nash-stable feasible
/// partition. Deterministic: the same devices and parameters always
/// produce the same partition and trace.
pub fn run_game(
    devices: &[Device],
    cp: &ChannelParams,
    sp: &SizeProfile,
    cfg: &GameConfig,
) -> Result<GameOutcome, GameError> {
    if devices.len() < 4 {
        return Err(GameError::TooFewDevices(devices.len()));
    }
    let mut engine = Engine::from_singletons(devices, cp, sp, cfg)?;
    let mut trace = Vec::new();
    let mut seen: HashSet<[u8; 32]> = HashSet::new();
    seen.insert(engine.partition_digest());

    let mut slot = 0usize;
    loop {
        if slot >= cfg.slot_cap {
            return Err(GameError::SlotCapExceeded { cap: cfg.slot_cap });
        }

        // Propose phase: ascending cluster order; every touched cluster
        // becomes occupied for the rest of the slot.
        let cluster_ids: Vec<ClusterId> = engine.clusters.keys().copied().collect();
        let mut occupied: BTreeSet<ClusterId> = BTreeSet::new();
        let mut queued: Vec<SwitchOp> = Vec::new();
        let mut proposers: Vec<DeviceId> = Vec::new();
        for cl in cluster_ids {
            if occupied.contains(&cl) {
                continue;
            }
            // Candidate: least-visited member, ties toward the lowest id.
            let candidate = *engine.clusters[&cl]
                .members
                .iter()
                .min_by_key(|&&m| (engine.visits[m as usize], m))
                .expect("clusters are non-empty");
            engine.visits[candidate as usize] += 1;

            let prefs = engine.preference_list(candidate);
            let previous = engine.last_gain[candidate as usize];
            let proposal = prefs.into_iter().find(|op| {
                !occupied.contains(&op.to_cluster)
                    && previous.is_none_or(|g| op.gain > g)
            });
            if let Some(op) = proposal {
                engine.last_gain[candidate as usize] = Some(op.gain);
                proposers.push(candidate);
                occupied.insert(op.from_cluster);
                occupied.insert(op.to_cluster);
                queued.push(op);
            }
        }

        // Execute phase: revalidate each queued switch against the live
        // state; only strict improvements apply.
        let welfare_before = engine.welfare_u;
        let mut executed: Vec<SwitchOp> = Vec::new();
        for op in queued {
            let eval = engine.evaluate_op(op.device, op.from_cluster, op.to_cluster);
            if eval.gain > 0.0 {
                let op = SwitchOp {
                    gain: eval.gain,
                    ..op
                };
                engine.apply(&op, &eval);
                executed.push(op);
            }
        }
        for dev in proposers {
            engine.last_gain[dev as usize] = None;
        }

        if executed.is_empty() {
            // Quiet slot: terminate only when genuinely Nash-stable;
            // otherwise keep rotating candidates by visit count.
            if engine.positive_switches(true).is_empty() {
                break;
            }
            slot += 1;
            continue;
        }

        if engine.welfare_u <= welfare_before {
            return Err(GameError::WelfareRegression { slot });
        }
        if !seen.insert(engine.partition_digest()) {
            return Err(GameError::PartitionRevisited { slot });
        }
        trace.push(SlotTrace {
            slot,
            executed,
            welfare: engine.welfare_u,
        });
        slot += 1;
    }

    Ok(GameOutcome {
        partition: engine.to_partition(),
        welfare: engine.welfare_u,
        trace,
        slots: slot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{DatasetShard, Role};
    use approx::assert_relative_eq;

    fn device_at(id: DeviceId, x: f64, y: f64, reliability: f64, samples: usize) -> Device {
        Device {
            id,
            position: (x, y),
            compute: 1e9,
            tx_power: 0.2,
            dataset: DatasetShard::new(vec![0.0; samples * 2], vec![0; samples], 2),
            reliability,
            reputation: 0.0,
            role: Role::Member,
        }
    }

    fn square_devices(n: u32, side: f64) -> Vec<Device> {
        (0..n)
            .map(|i| {
                let row = (i / 4) as f64;
                let col = (i % 4) as f64;
                device_at(i, 50.0 + col * side, 50.0 + row * side, 0.9, 10)
            })
            .collect()
    }

    #[test]
    fn security_partial_matches_direct_security() {
        let rels = [0.9, 0.7, 0.85, 0.6, 0.95];
        let swap = SecurityPartial::new(&rels[..4], 5);
        let direct = security_of(&rels);
        assert_relative_eq!(swap.with_candidate(0.95), direct, epsilon = 1e-12);
    }

    #[test]
    fn engine_latency_matches_radio_round_latency() {
        let devices = square_devices(8, 90.0);
        let cp = ChannelParams::default();
        let sp = SizeProfile::default();
        let p = Partition::singletons(0..8);
        let rl = crate::radio::round_latency(&p, &devices, &sp, &cp).unwrap();
        let net = NetView::new(&devices, &cp, &sp).unwrap();
        let committee: Vec<DeviceId> = (0..8).collect();
        for i in 0..8u32 {
            let t = net.cluster_latency(&[i], i, &committee);
            assert_relative_eq!(t, rl.per_device[&i], max_relative = 1e-12);
        }
    }

    #[test]
    fn cluster_value_composes_security_and_latency() {
        // 6 devices, 2 clusters: v equals a hand-composed S/T evaluation.
        let devices = square_devices(6, 80.0);
        let cp = ChannelParams::default();
        let sp = SizeProfile::default();
        let members = vec![0u32, 1, 2];
        let committee = vec![1u32, 4];
        let v = cluster_value(&members, &committee, &devices, &cp, &sp, 1e9).unwrap();

        let s = security_of(&[devices[1].reliability, devices[4].reliability]);
        let net = NetView::new(&devices, &cp, &sp).unwrap();
        let t = net.cluster_latency(&members, 1, &committee);
        // K = 2 < 4: the penalty applies.
        assert_relative_eq!(v, s / t - 1e9, max_relative = 1e-12);
        assert!(v < 0.0);
    }

    #[test]
    fn cluster_value_of_empty_cluster_is_zero() {
        let devices = square_devices(4, 80.0);
        let v = cluster_value(
            &[],
            &[0, 1, 2, 3],
            &devices,
            &ChannelParams::default(),
            &SizeProfile::default(),
            1e9,
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn symmetric_switch_has_zero_gain() {
        // Two mirror-image clusters: moving a device to the mirror cluster
        // of an identical twin yields a gain of exactly the welfare
        // difference between two congruent partitions, which is zero only
        // for a truly symmetric swap; here we check the weaker property
        // that a switch between identical singleton clusters of identical
        // devices has zero gain.
        let mut devices = vec![
            device_at(0, 100.0, 100.0, 0.9, 10),
            device_at(1, 100.0, 100.1, 0.9, 10),
            device_at(2, 900.0, 900.0, 0.9, 10),
            device_at(3, 900.0, 900.1, 0.9, 10),
            device_at(4, 500.0, 500.0, 0.9, 10),
        ];
        // Make 0 and 1 exact duplicates apart from position jitter that we
        // zero out: same point is not allowed (rate singularity), so use a
        // tiny offset and accept near-zero.
        devices[1].position = (100.0, 100.000001);
        let p = Partition::singletons(0..5);
        let cfg = GameConfig::default();
        let g01 = switch_gain(
            &p,
            &devices,
            &ChannelParams::default(),
            &SizeProfile::default(),
            &cfg,
            0,
            1,
        )
        .unwrap();
        let g10 = switch_gain(
            &p,
            &devices,
            &ChannelParams::default(),
            &SizeProfile::default(),
            &cfg,
            1,
            0,
        )
        .unwrap();
        assert_relative_eq!(g01, g10, max_relative = 1e-6);
    }

    #[test]
    fn gain_matches_direct_welfare_recomputation() {
        let devices = square_devices(6, 120.0);
        let cp = ChannelParams::default();
        let sp = SizeProfile::default();
        let cfg = GameConfig::default();
        let p = Partition::singletons(0..6);
        let engine = Engine::from_partition(&p, &devices, &cp, &sp, &cfg).unwrap();
        let eval = engine.evaluate_op(0, 0, 1);

        // Oracle: recompute both welfares from cluster values directly.
        let committee_before: Vec<DeviceId> = (0..6).collect();
        let mut before = 0.0;
        for i in 0..6u32 {
            before +=
                cluster_value(&[i], &committee_before, &devices, &cp, &sp, 0.0).unwrap();
        }
        // After: device 0 joins cluster 1; heads of the five clusters are
        // the remaining devices with cluster 1's head elected by the rule.
        let mut after = 0.0;
        let merged = vec![0u32, 1];
        let committee_after: Vec<DeviceId> = {
            let mut c = vec![eval.dst_head];
            c.extend(2..6u32);
            c.sort_unstable();
            c
        };
        after += cluster_value(&merged, &committee_after, &devices, &cp, &sp, 0.0).unwrap();
        for i in 2..6u32 {
            after += cluster_value(&[i], &committee_after, &devices, &cp, &sp, 0.0).unwrap();
        }
        assert_relative_eq!(eval.gain, after - before, max_relative = 1e-9);
    }

    #[test]
    fn dropping_below_four_clusters_is_penalized() {
        let devices = square_devices(4, 100.0);
        let cp = ChannelParams::default();
        let sp = SizeProfile::default();
        let cfg = GameConfig::default();
        let p = Partition::singletons(0..4);
        let g = switch_gain(&p, &devices, &cp, &sp, &cfg, 0, 1).unwrap();
        assert!(g < 0.0, "merging 4 singletons must be penalized, got {g}");
    }

    #[test]
    fn four_homogeneous_devices_stay_singletons() {
        let devices = square_devices(4, 100.0);
        let cp = ChannelParams::default();
        let sp = SizeProfile::default();
        let cfg = GameConfig::default();
        let out = run_game(&devices, &cp, &sp, &cfg).unwrap();
        assert_eq!(out.partition.num_clusters, 4);
        out.partition.validate_feasible().unwrap();
        // Exhaustive audit: no positive switch remains.
        let audit = nash_audit(&out.partition, &devices, &cp, &sp, &cfg).unwrap();
        assert!(audit.is_empty(), "positive switches remain: {audit:?}");
    }

    #[test]
    fn update_preferences_orders_by_gain() {
        let devices = square_devices(8, 70.0);
        let cp = ChannelParams::default();
        let sp = SizeProfile::default();
        let cfg = GameConfig::default();
        let p = Partition::singletons(0..8);
        let (prefs, proposal) =
            update_preferences(&p, &devices, &cp, &sp, &cfg, 0).unwrap();
        for w in prefs.windows(2) {
            assert!(w[0].gain >= w[1].gain);
        }
        match (prefs.first(), proposal) {
            (Some(top), Some(p)) => assert_eq!(top, &p),
            (None, None) => {}
            other => panic!("inconsistent proposal: {other:?}"),
        }
    }

    #[test]
    fn two_blob_network_terminates_nash_stable() {
        let mut devices = Vec::new();
        for i in 0..4u32 {
            devices.push(device_at(i, 100.0 + 30.0 * i as f64, 80.0, 0.9, 10));
        }
        for i in 4..8u32 {
            devices.push(device_at(i, 800.0 + 30.0 * (i - 4) as f64, 900.0, 0.85, 10));
        }
        let cp = ChannelParams::default();
        let sp = SizeProfile::default();
        let cfg = GameConfig::default();
        let out = run_game(&devices, &cp, &sp, &cfg).unwrap();
        out.partition.validate_feasible().unwrap();
        // Welfare strictly increases along the trace.
        let mut last = f64::NEG_INFINITY;
        for t in &out.trace {
            assert!(t.welfare > last);
            last = t.welfare;
        }
        let audit = nash_audit(&out.partition, &devices, &cp, &sp, &cfg).unwrap();
        assert!(audit.is_empty(), "positive switches remain: {audit:?}");
    }

    #[test]
    fn replay_is_deterministic() {
        let devices = square_devices(10, 110.0);
        let cp = ChannelParams::default();
        let sp = SizeProfile::default();
        let cfg = GameConfig::default();
        let a = run_game(&devices, &cp, &sp, &cfg).unwrap();
        let b = run_game(&devices, &cp, &sp, &cfg).unwrap();
        assert_eq!(a.partition, b.partition);
        assert_eq!(a.trace, b.trace);
    }
}

