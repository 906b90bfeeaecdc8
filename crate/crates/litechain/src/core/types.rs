//! Domain types shared by every protocol module.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::hash::{canonical_hash, weights_canonical_bytes, HashError, Identifier};

pub type DeviceId = u32;
pub type ClusterId = u32;

/// Role a device currently plays in its cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Member,
    Committee,
}

/// One labeled feature matrix held by a single device.
///
/// `features` is row-major with `dim` columns; row `i` is the feature
/// vector of sample `i` and `labels[i]` its class in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetShard {
    pub features: Vec<f64>,
    pub labels: Vec<u32>,
    pub dim: usize,
}

impl DatasetShard {
    pub fn new(features: Vec<f64>, labels: Vec<u32>, dim: usize) -> Self {
        assert_eq!(features.len(), labels.len() * dim, "ragged shard");
        Self {
            features,
            labels,
            dim,
        }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            features: Vec::new(),
            labels: Vec::new(),
            dim,
        }
    }

    /// Number of samples in the shard.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature row of sample `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

/// An edge node: position and radio power for the channel model, compute
/// capacity for the latency model, a dataset shard for training, and the
/// reliability / reputation pair driving the consensus-security metric.
///
/// `reliability` is the probability the device behaves correctly in a
/// consensus phase; `reputation` is the raw score it is periodically
/// re-normalized from. They are distinct fields on purpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: DeviceId,
    /// Position in meters within the deployment area.
    pub position: (f64, f64),
    /// Compute capacity in floating-point ops per second.
    pub compute: f64,
    /// Transmission power in watts.
    pub tx_power: f64,
    pub dataset: DatasetShard,
    /// Probability in [0, 1] of honest behavior per consensus phase.
    pub reliability: f64,
    /// Non-negative raw reputation score.
    pub reputation: f64,
    pub role: Role,
}

impl Device {
    /// Euclidean distance to another device, in meters.
    pub fn distance(&self, other: &Device) -> f64 {
        let dx = self.position.0 - other.position.0;
        let dy = self.position.1 - other.position.1;
        (dx * dx + dy * dy).sqrt()
    }

    /// Field invariants: reliability in [0,1], positive compute and power.
    pub fn check_invariants(&self) -> bool {
        (0.0..=1.0).contains(&self.reliability)
            && self.compute > 0.0
            && self.tx_power > 0.0
            && self.reputation >= 0.0
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("device {0} has no cluster assignment")]
    Unassigned(DeviceId),
    #[error("cluster {0} has no committee member")]
    MissingCommittee(ClusterId),
    #[error("committee member {member} of cluster {cluster} is not one of its members")]
    ForeignCommittee { cluster: ClusterId, member: DeviceId },
    #[error("committee references unknown cluster {0}")]
    DanglingCluster(ClusterId),
    #[error("declared {declared} clusters but found {found}")]
    ClusterCountMismatch { declared: usize, found: usize },
    #[error("{0} clusters violate the BFT minimum of 4")]
    BelowBftMinimum(usize),
}

/// Cluster assignment and committee election over all devices.
///
/// Every device belongs to exactly one cluster and every cluster has
/// exactly one committee member drawn from its own members. A partition is
/// feasible when it additionally satisfies `4 <= K <= N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    /// device id -> cluster id
    pub assignments: BTreeMap<DeviceId, ClusterId>,
    /// cluster id -> its single committee member
    pub committee: BTreeMap<ClusterId, DeviceId>,
    pub num_clusters: usize,
}

impl Partition {
    /// The degenerate flat structure: every device its own cluster and its
    /// own committee member. This is both the coalition game's starting
    /// point and the one-tier baseline topology (K = N, committee of all).
    pub fn singletons(device_ids: impl IntoIterator<Item = DeviceId>) -> Self {
        let mut assignments = BTreeMap::new();
        let mut committee = BTreeMap::new();
        for id in device_ids {
            assignments.insert(id, id as ClusterId);
            committee.insert(id as ClusterId, id);
        }
        let num_clusters = committee.len();
        Self {
            assignments,
            committee,
            num_clusters,
        }
    }

    /// Members of each cluster, keyed by cluster id.
    pub fn clusters(&self) -> BTreeMap<ClusterId, BTreeSet<DeviceId>> {
        let mut map: BTreeMap<ClusterId, BTreeSet<DeviceId>> = BTreeMap::new();
        for (&dev, &cl) in &self.assignments {
            map.entry(cl).or_default().insert(dev);
        }
        map
    }

    /// Cluster of a device, if assigned.
    pub fn cluster_of(&self, device: DeviceId) -> Option<ClusterId> {
        self.assignments.get(&device).copied()
    }

    /// Committee members ordered by cluster id.
    pub fn committee_members(&self) -> Vec<DeviceId> {
        self.committee.values().copied().collect()
    }

    /// Structural invariants: total assignment, one committee member per
    /// cluster drawn from its own members, consistent cluster count.
    pub fn validate(&self) -> Result<(), PartitionError> {
        let clusters = self.clusters();
        if clusters.len() != self.committee.len() {
            // Some cluster either lacks a head or a head lacks members.
            for cl in clusters.keys() {
                if !self.committee.contains_key(cl) {
                    return Err(PartitionError::MissingCommittee(*cl));
                }
            }
            for cl in self.committee.keys() {
                if !clusters.contains_key(cl) {
                    return Err(PartitionError::DanglingCluster(*cl));
                }
            }
        }
        for (&cl, &head) in &self.committee {
            match clusters.get(&cl) {
                None => return Err(PartitionError::DanglingCluster(cl)),
                Some(members) if !members.contains(&head) => {
                    return Err(PartitionError::ForeignCommittee {
                        cluster: cl,
                        member: head,
                    })
                }
                _ => {}
            }
        }
        for cl in clusters.keys() {
            if !self.committee.contains_key(cl) {
                return Err(PartitionError::MissingCommittee(*cl));
            }
        }
        if self.num_clusters != clusters.len() {
            return Err(PartitionError::ClusterCountMismatch {
                declared: self.num_clusters,
                found: clusters.len(),
            });
        }
        Ok(())
    }

    /// Structural validity plus the BFT feasibility bound `4 <= K <= N`.
    pub fn validate_feasible(&self) -> Result<(), PartitionError> {
        self.validate()?;
        if self.num_clusters < 4 {
            return Err(PartitionError::BelowBftMinimum(self.num_clusters));
        }
        Ok(())
    }

    /// Sets `role` on each device according to the committee election.
    pub fn apply_roles(&self, devices: &mut [Device]) {
        let heads: BTreeSet<DeviceId> = self.committee.values().copied().collect();
        for d in devices {
            d.role = if heads.contains(&d.id) {
                Role::Committee
            } else {
                Role::Member
            };
        }
    }
}

/// A weight vector plus provenance. The identifier is always the canonical
/// hash of the weights and can be recomputed by any holder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelUpdate {
    pub weights: Vec<f64>,
    /// Producing device id (member updates) or cluster id (aggregates).
    pub owner: u32,
    pub round: u64,
    /// Local SGD steps completed to produce this update.
    pub local_steps: u32,
    pub identifier: Identifier,
    /// Stand-in for signature verification; adversaries may clear it.
    pub signature_valid: bool,
}

impl ModelUpdate {
    /// Builds an update, deriving the identifier from the weights.
    pub fn new(
        weights: Vec<f64>,
        owner: u32,
        round: u64,
        local_steps: u32,
    ) -> Result<Self, HashError> {
        let identifier = canonical_hash(&weights)?;
        Ok(Self {
            weights,
            owner,
            round,
            local_steps,
            identifier,
            signature_valid: true,
        })
    }

    /// True when the stored identifier matches the weights.
    pub fn identifier_consistent(&self) -> bool {
        canonical_hash(&self.weights).map(|h| h == self.identifier) == Ok(true)
    }

    /// Canonical byte layout, in field order: weights (length-prefixed
    /// little-endian f64s), owner `u32 LE`, round `u64 LE`, local_steps
    /// `u32 LE`, identifier (32 raw bytes), signature_valid (one byte).
    pub fn canonical_bytes(&self) -> Result<Vec<u8>, HashError> {
        let mut bytes = weights_canonical_bytes(&self.weights)?;
        bytes.extend_from_slice(&self.owner.to_le_bytes());
        bytes.extend_from_slice(&self.round.to_le_bytes());
        bytes.extend_from_slice(&self.local_steps.to_le_bytes());
        bytes.extend_from_slice(&self.identifier);
        bytes.push(self.signature_valid as u8);
        Ok(bytes)
    }
}
