//! The append-only hash-chained ledger with reputation bookkeeping,
//! pruning, and line-delimited export for offline audit.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::core::{DeviceId, Identifier};

use super::block::{Block, BlockBody};

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("empty ledger")]
    Empty,
    #[error("block at height {got} does not follow tip height {tip}")]
    NonConsecutiveHeight { tip: u64, got: u64 },
    #[error("block {height}: previous-hash link broken")]
    BrokenLink { height: u64 },
    #[error("block {height}: stored hash does not match its fields")]
    HashMismatch { height: u64 },
    #[error("import line {line}: {message}")]
    Import { line: usize, message: String },
}

/// Append-only block list plus the rolling reputation map and the count of
/// completed update epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    blocks: Vec<Block>,
    pub reputation: BTreeMap<DeviceId, f64>,
    pub epoch: u64,
}

impl Ledger {
    /// A chain rooted at a genesis block for the initial model.
    pub fn new(genesis_model_id: Identifier) -> Self {
        Self {
            blocks: vec![Block::genesis(genesis_model_id)],
            reputation: BTreeMap::new(),
            epoch: 0,
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("ledger always has a genesis")
    }

    pub fn next_height(&self) -> u64 {
        self.tip().height + 1
    }

    /// True when a live non-checkpoint block already carries this model
    /// identifier.
    pub fn contains_model_id(&self, id: &Identifier) -> bool {
        self.blocks
            .iter()
            .any(|b| b.body.counts_for_uniqueness() && &b.model_id == id)
    }

    /// Appends a block after checking height, link, and hash consistency.
    pub fn append(&mut self, block: Block) -> Result<(), LedgerError> {
        let tip = self.tip();
        if block.height != tip.height + 1 {
            return Err(LedgerError::NonConsecutiveHeight {
                tip: tip.height,
                got: block.height,
            });
        }
        if block.prev_hash != tip.block_hash {
            return Err(LedgerError::BrokenLink {
                height: block.height,
            });
        }
        if !block.hash_consistent() {
            return Err(LedgerError::HashMismatch {
                height: block.height,
            });
        }
        self.blocks.push(block);
        Ok(())
    }

    /// End-to-end chain verification: consecutive heights, intact links,
    /// and every stored hash recomputes. The oldest retained block is the
    /// root; its predecessor may have been pruned away.
    pub fn verify_chain(&self) -> Result<(), LedgerError> {
        let first = self.blocks.first().ok_or(LedgerError::Empty)?;
        if !first.hash_consistent() {
            return Err(LedgerError::HashMismatch {
                height: first.height,
            });
        }
        for pair in self.blocks.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.height != a.height + 1 {
                return Err(LedgerError::NonConsecutiveHeight {
                    tip: a.height,
                    got: b.height,
                });
            }
            if !b.hash_consistent() {
                return Err(LedgerError::HashMismatch { height: b.height });
            }
            if b.prev_hash != a.block_hash {
                return Err(LedgerError::BrokenLink { height: b.height });
            }
        }
        Ok(())
    }

    /// Drops every block below `cutoff_height`, keeping the suffix intact.
    /// Returns the number of pruned blocks.
    pub fn prune_before(&mut self, cutoff_height: u64) -> usize {
        let keep_from = self
            .blocks
            .iter()
            .position(|b| b.height >= cutoff_height)
            .unwrap_or(self.blocks.len());
        self.blocks.drain(..keep_from).count()
    }

    /// Total serialized bytes of the live chain.
    pub fn live_bytes(&self) -> u64 {
        self.blocks.iter().map(|b| b.exported_bytes()).sum()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Line-delimited export: one JSON block per line, oldest first.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for block in &self.blocks {
            out.push_str(&serde_json::to_string(block).expect("blocks serialize"));
            out.push('\n');
        }
        out
    }

    /// Rebuilds a ledger from an export. Reputation is restored from the
    /// latest checkpoint snapshot; the epoch counter counts checkpoints.
    pub fn import_jsonl(text: &str) -> Result<Self, LedgerError> {
        let mut blocks = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let block: Block = serde_json::from_str(line).map_err(|e| LedgerError::Import {
                line: idx + 1,
                message: e.to_string(),
            })?;
            blocks.push(block);
        }
        if blocks.is_empty() {
            return Err(LedgerError::Empty);
        }
        let mut reputation = BTreeMap::new();
        let mut epoch = 0;
        for block in &blocks {
            if let BlockBody::Checkpoint { reputation: snap } = &block.body {
                reputation = snap.clone();
                epoch += 1;
            }
        }
        Ok(Self {
            blocks,
            reputation,
            epoch,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::block::Participation;
    use crate::core::canonical_hash;

    fn chain_with(n: usize) -> Ledger {
        let mut ledger = Ledger::new(canonical_hash(&[0.0]).unwrap());
        for i in 0..n {
            let model_id = canonical_hash(&[i as f64 + 1.0]).unwrap();
            let block = Block::new(
                ledger.next_height(),
                ledger.tip().block_hash,
                model_id,
                i as u32,
                i as u64 + 1,
                vec![Participation {
                    device: i as u32,
                    data_size: 5,
                    verified: true,
                }],
                i as f64,
                BlockBody::ModelId,
            );
            ledger.append(block).unwrap();
        }
        ledger
    }

    #[test]
    fn chain_verifies_end_to_end() {
        let ledger = chain_with(5);
        ledger.verify_chain().unwrap();
        assert_eq!(ledger.len(), 6);
    }

    #[test]
    fn append_rejects_bad_link() {
        let mut ledger = chain_with(2);
        let block = Block::new(
            ledger.next_height(),
            [7; 32],
            canonical_hash(&[99.0]).unwrap(),
            0,
            9,
            vec![],
            0.0,
            BlockBody::ModelId,
        );
        assert_eq!(
            ledger.append(block),
            Err(LedgerError::BrokenLink { height: 3 })
        );
    }

    #[test]
    fn tampered_block_is_detected_with_its_height() {
        let mut ledger = chain_with(4);
        ledger.blocks[2].round = 77;
        assert_eq!(
            ledger.verify_chain(),
            Err(LedgerError::HashMismatch { height: 2 })
        );
    }

    #[test]
    fn prune_keeps_suffix_verifiable() {
        let mut ledger = chain_with(6);
        let pruned = ledger.prune_before(4);
        assert_eq!(pruned, 4);
        assert_eq!(ledger.blocks.first().unwrap().height, 4);
        ledger.verify_chain().unwrap();
    }

    #[test]
    fn export_import_round_trip() {
        let ledger = chain_with(3);
        let text = ledger.export_jsonl();
        let back = Ledger::import_jsonl(&text).unwrap();
        assert_eq!(ledger.blocks(), back.blocks());
        back.verify_chain().unwrap();
    }

    #[test]
    fn import_flags_bad_line() {
        let err = Ledger::import_jsonl("not json\n").unwrap_err();
        assert!(matches!(err, LedgerError::Import { line: 1, .. }));
    }

    #[test]
    fn duplicate_detection_ignores_checkpoints() {
        let mut ledger = chain_with(2);
        let model_id = ledger.blocks()[1].model_id;
        let checkpoint = Block::new(
            ledger.next_height(),
            ledger.tip().block_hash,
            model_id,
            0,
            3,
            vec![],
            1.0,
            BlockBody::Checkpoint {
                reputation: BTreeMap::new(),
            },
        );
        ledger.append(checkpoint).unwrap();
        assert!(ledger.contains_model_id(&model_id));
        let fresh = canonical_hash(&[123.0]).unwrap();
        assert!(!ledger.contains_model_id(&fresh));
    }
}
