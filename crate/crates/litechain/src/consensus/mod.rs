//! The ledger, the CBFT block-commit state machine, and the periodic
//! secure-update consensus with reputation and pruning.

mod block;
mod cbft;
mod ledger;
mod update;

pub use block::{Block, BlockBody, Participation, NETWORK_PROPOSER};
pub use cbft::{
    cbft_commit, commit_threshold, CommitOutcome, CommitResult, ConsensusError, ConsensusRound,
    Phase, RejectReason,
};
pub use ledger::{Ledger, LedgerError};
pub use update::{normalize_reputation, update_consensus, UpdateParams, UpdateReport};
