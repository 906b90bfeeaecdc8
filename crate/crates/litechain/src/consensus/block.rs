//! Hash-chained blocks holding model identifiers and participation
//! records.
//!
//! The block hash covers the canonical byte layout below, in field order:
//! height `u64 LE`, prev_hash (32 bytes), model_id (32 bytes), proposer
//! `u32 LE`, round `u64 LE`, participation count `u32 LE` followed by each
//! record as (device `u32 LE`, data_size `u64 LE`, verified `u8`),
//! timestamp as `f64 LE` bits, then the body tag and body payload.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::core::{sha256, DeviceId, Identifier};

/// One device's participation record inside a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participation {
    pub device: DeviceId,
    pub data_size: u64,
    pub verified: bool,
}

/// What the block stores besides its header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockBody {
    /// Identifier-only storage: the model itself stays off-chain.
    ModelId,
    /// Full-model storage (one-tier baseline): weights embedded on-chain.
    FullModel { weights: Vec<f64> },
    /// Epoch checkpoint: the synchronized model's identifier lives in the
    /// header; the body snapshots the rolling reputation map.
    Checkpoint { reputation: BTreeMap<DeviceId, f64> },
}

impl BlockBody {
    fn tag(&self) -> u8 {
        match self {
            BlockBody::ModelId => 0,
            BlockBody::FullModel { .. } => 1,
            BlockBody::Checkpoint { .. } => 2,
        }
    }

    /// Checkpoints are protocol metadata: they repeat a model identifier
    /// on purpose and are exempt from the uniqueness rule.
    pub fn counts_for_uniqueness(&self) -> bool {
        !matches!(self, BlockBody::Checkpoint { .. })
    }
}

/// Proposer id of bootstrap blocks that no device produced.
pub const NETWORK_PROPOSER: DeviceId = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Identifier,
    pub model_id: Identifier,
    pub proposer: DeviceId,
    pub round: u64,
    pub participation: Vec<Participation>,
    /// Simulated seconds at which the block was committed.
    pub timestamp: f64,
    pub body: BlockBody,
    pub block_hash: Identifier,
}

impl Block {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        height: u64,
        prev_hash: Identifier,
        model_id: Identifier,
        proposer: DeviceId,
        round: u64,
        participation: Vec<Participation>,
        timestamp: f64,
        body: BlockBody,
    ) -> Self {
        let mut block = Self {
            height,
            prev_hash,
            model_id,
            proposer,
            round,
            participation,
            timestamp,
            body,
            block_hash: [0; 32],
        };
        block.block_hash = block.compute_hash();
        block
    }

    /// The genesis block anchoring a chain on the initial model.
    pub fn genesis(model_id: Identifier) -> Self {
        Self::new(
            0,
            [0; 32],
            model_id,
            NETWORK_PROPOSER,
            0,
            Vec::new(),
            0.0,
            BlockBody::ModelId,
        )
    }

    /// SHA-256 over the canonical byte layout of all fields except the
    /// hash itself.
    pub fn compute_hash(&self) -> Identifier {
        let mut bytes = Vec::with_capacity(128 + 16 * self.participation.len());
        bytes.extend_from_slice(&self.height.to_le_bytes());
        bytes.extend_from_slice(&self.prev_hash);
        bytes.extend_from_slice(&self.model_id);
        bytes.extend_from_slice(&self.proposer.to_le_bytes());
        bytes.extend_from_slice(&self.round.to_le_bytes());
        bytes.extend_from_slice(&(self.participation.len() as u32).to_le_bytes());
        for p in &self.participation {
            bytes.extend_from_slice(&p.device.to_le_bytes());
            bytes.extend_from_slice(&p.data_size.to_le_bytes());
            bytes.push(p.verified as u8);
        }
        bytes.extend_from_slice(&self.timestamp.to_le_bytes());
        bytes.push(self.body.tag());
        match &self.body {
            BlockBody::ModelId => {}
            BlockBody::FullModel { weights } => {
                bytes.extend_from_slice(&(weights.len() as u64).to_le_bytes());
                for w in weights {
                    bytes.extend_from_slice(&w.to_le_bytes());
                }
            }
            BlockBody::Checkpoint { reputation } => {
                bytes.extend_from_slice(&(reputation.len() as u32).to_le_bytes());
                for (dev, score) in reputation {
                    bytes.extend_from_slice(&dev.to_le_bytes());
                    bytes.extend_from_slice(&score.to_le_bytes());
                }
            }
        }
        sha256(&bytes)
    }

    /// True when the stored hash matches the fields.
    pub fn hash_consistent(&self) -> bool {
        self.block_hash == self.compute_hash()
    }

    /// Serialized size in bytes of the exported record.
    pub fn exported_bytes(&self) -> u64 {
        serde_json::to_string(self).map(|s| s.len() as u64 + 1).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_covers_every_field() {
        let base = Block::new(
            3,
            [1; 32],
            [2; 32],
            7,
            4,
            vec![Participation {
                device: 1,
                data_size: 10,
                verified: true,
            }],
            12.5,
            BlockBody::ModelId,
        );
        assert!(base.hash_consistent());

        let mut changed = base.clone();
        changed.round = 5;
        assert_ne!(changed.compute_hash(), base.block_hash);

        let mut changed = base.clone();
        changed.participation[0].verified = false;
        assert_ne!(changed.compute_hash(), base.block_hash);

        let mut changed = base.clone();
        changed.body = BlockBody::FullModel { weights: vec![1.0] };
        assert_ne!(changed.compute_hash(), base.block_hash);
    }

    #[test]
    fn serde_round_trip() {
        let block = Block::new(
            1,
            [0; 32],
            [9; 32],
            2,
            1,
            vec![],
            0.0,
            BlockBody::Checkpoint {
                reputation: BTreeMap::from([(0, 10.0), (1, 20.0)]),
            },
        );
        let json = serde_json::to_string(&block).unwrap();
        let back: Block = serde_json::from_str(&json).unwrap();
        assert_eq!(block, back);
        assert!(back.hash_consistent());
    }
}
