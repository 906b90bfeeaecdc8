//! Shared domain types, canonical serialization, the hash-identifier scheme,
//! and the deterministic PRNG used by every other module.
//!
//! All types here are immutable value types that are safe to share across
//! threads; the PRNG stream is single-owner and must be split before sharing.

mod hash;
mod rng;
mod types;

pub use hash::{canonical_hash, sha256, weights_canonical_bytes, HashError, Identifier};
pub use rng::DetRng;
pub use types::{
    ClusterId, DatasetShard, Device, DeviceId, ModelUpdate, Partition, PartitionError, Role,
};
