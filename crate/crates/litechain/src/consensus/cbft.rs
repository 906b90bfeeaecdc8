//! The CBFT block-commit state machine: a four-phase PBFT-style round
//! (prepare, verify, commit, reply) augmented with model-quality and
//! duplicate-identifier checks.
//!
//! Votes are simulated: each committee member behaves honestly in a phase
//! with probability equal to its reliability and inverts its honest
//! verdict otherwise; forced-no voters (captured devices) always vote no.
//! The duplicate-identifier check is deterministic and happens before any
//! vote, so a replayed identifier is rejected even by a fully honest
//! committee.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::core::{Device, DeviceId, DetRng, ModelUpdate};
use crate::radio::{verify_latency, ChannelParams, RadioError, SizeProfile};

use super::block::Block;
use super::ledger::{Ledger, LedgerError};

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("committee of {0} is below the BFT minimum of 4")]
    CommitteeTooSmall(usize),
    #[error("model identifier does not match the block's model_id")]
    IdentifierMismatch,
    #[error("proposer {0} is not a committee member")]
    ProposerNotInCommittee(DeviceId),
    #[error("update consensus failed after {attempts} attempts")]
    RetriesExhausted { attempts: usize },
    #[error("no cluster models available to synchronize")]
    NoModelsToSync,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Hash(#[from] crate::core::HashError),
}

/// Why a proposal did not commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// The model identifier already lives on the chain.
    Replay,
    /// The signature flag was invalid.
    Signature,
    /// The committee judged the model below the quality threshold.
    Quality,
    /// Not enough honest votes reached the threshold.
    Votes,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::Replay => "replay",
            RejectReason::Signature => "signature",
            RejectReason::Quality => "quality",
            RejectReason::Votes => "votes",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommitOutcome {
    Committed { latency: f64 },
    Rejected { reason: RejectReason },
}

impl CommitOutcome {
    pub fn is_committed(&self) -> bool {
        matches!(self, CommitOutcome::Committed { .. })
    }
}

/// Consensus round phases, advancing monotonically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Prepare,
    Verify,
    Commit,
    Reply,
    Done,
    Aborted,
}

/// Vote record of one CBFT round.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusRound {
    pub phase: Phase,
    pub requester: DeviceId,
    pub verify_votes: BTreeMap<DeviceId, bool>,
    pub commit_votes: BTreeMap<DeviceId, bool>,
    /// `ceil((2K+1)/3)` yes votes required in each phase, fixed at round
    /// start.
    pub threshold: usize,
}

/// `ceil((2K+1)/3)` for a committee of K.
pub fn commit_threshold(k: usize) -> usize {
    (2 * k + 1).div_ceil(3)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommitResult {
    pub outcome: CommitOutcome,
    pub round: ConsensusRound,
}

/// Runs one CBFT round for a proposed block and appends it on success.
///
/// `quality` is the per-verifier model-quality judgment (sample accuracy
/// against the threshold); `forced_no` members vote no in every phase;
/// `replay_detection` switches the duplicate-identifier defense, on in the
/// standard protocol.
#[allow(clippy::too_many_arguments)]
pub fn cbft_commit(
    block: Block,
    model: &ModelUpdate,
    committee: &[&Device],
    ledger: &mut Ledger,
    quality: &mut dyn FnMut(DeviceId, &ModelUpdate) -> bool,
    forced_no: &BTreeSet<DeviceId>,
    replay_detection: bool,
    sp: &SizeProfile,
    cp: &ChannelParams,
    rng: &mut DetRng,
) -> Result<CommitResult, ConsensusError> {
    let k = committee.len();
    if k < 4 {
        return Err(ConsensusError::CommitteeTooSmall(k));
    }
    if model.identifier != block.model_id {
        return Err(ConsensusError::IdentifierMismatch);
    }
    let proposer = committee
        .iter()
        .find(|d| d.id == block.proposer)
        .ok_or(ConsensusError::ProposerNotInCommittee(block.proposer))?;
    let threshold = commit_threshold(k);
    let mut round = ConsensusRound {
        phase: Phase::Prepare,
        requester: block.proposer,
        verify_votes: BTreeMap::new(),
        commit_votes: BTreeMap::new(),
        threshold,
    };

    // Deterministic duplicate check before any vote: the chain itself is
    // the witness, so honesty cannot admit a replay.
    if replay_detection && ledger.contains_model_id(&block.model_id) {
        round.phase = Phase::Aborted;
        return Ok(CommitResult {
            outcome: CommitOutcome::Rejected {
                reason: RejectReason::Replay,
            },
            round,
        });
    }

    // Verify phase: each member checks signature and quality, then votes
    // honestly with probability equal to its reliability.
    round.phase = Phase::Verify;
    let mut quality_failures = 0usize;
    for member in committee {
        let quality_ok = quality(member.id, model);
        if !quality_ok {
            quality_failures += 1;
        }
        let verdict = model.signature_valid && quality_ok;
        let honest = rng.random_range(0.0..1.0) < member.reliability;
        let vote = if forced_no.contains(&member.id) {
            false
        } else if honest {
            verdict
        } else {
            !verdict
        };
        round.verify_votes.insert(member.id, vote);
    }
    let verify_yes = round.verify_votes.values().filter(|&&v| v).count();
    if verify_yes < threshold {
        round.phase = Phase::Aborted;
        let reason = if !model.signature_valid {
            RejectReason::Signature
        } else if quality_failures * 2 >= k {
            RejectReason::Quality
        } else {
            RejectReason::Votes
        };
        return Ok(CommitResult {
            outcome: CommitOutcome::Rejected { reason },
            round,
        });
    }

    // Commit phase: an honest member that saw enough verification votes
    // broadcasts its commit; a dishonest one withholds it.
    round.phase = Phase::Commit;
    for member in committee {
        let honest = rng.random_range(0.0..1.0) < member.reliability;
        let vote = !forced_no.contains(&member.id) && honest;
        round.commit_votes.insert(member.id, vote);
    }
    let commit_yes = round.commit_votes.values().filter(|&&v| v).count();
    if commit_yes < threshold {
        round.phase = Phase::Aborted;
        return Ok(CommitResult {
            outcome: CommitOutcome::Rejected {
                reason: RejectReason::Votes,
            },
            round,
        });
    }

    // Reply: the result reaches the requester; the block lands on chain.
    round.phase = Phase::Reply;
    let latency = verify_latency(proposer, committee, sp, cp)?;
    ledger.append(block)?;
    round.phase = Phase::Done;
    Ok(CommitResult {
        outcome: CommitOutcome::Committed { latency },
        round,
    })
}
