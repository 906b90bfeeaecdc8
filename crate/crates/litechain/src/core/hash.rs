//! Canonical byte serialization of weight vectors and the SHA-256 model
//! identifier derived from it.
//!
//! The byte layout is fixed so identifiers are reproducible on every
//! platform: a `u64` little-endian element count, followed by each weight
//! as a little-endian IEEE-754 `f64`. The identifier of a model is the
//! SHA-256 digest of exactly these bytes.

use sha2::{Digest, Sha256};
use thiserror::Error;

/// A 32-byte model identifier.
pub type Identifier = [u8; 32];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HashError {
    /// Hashing an empty weight vector would produce an identifier for a
    /// zero-dimension model and is rejected.
    #[error("zero-dimension model")]
    EmptyWeights,
    /// NaN or infinite weights must not enter the ledger; the index of the
    /// first offending element is reported.
    #[error("non-finite weight at index {0}")]
    NonFinite(usize),
}

/// Canonical byte layout of a weight vector: `len: u64 LE` then each
/// element as `f64 LE`.
pub fn weights_canonical_bytes(weights: &[f64]) -> Result<Vec<u8>, HashError> {
    if weights.is_empty() {
        return Err(HashError::EmptyWeights);
    }
    if let Some(idx) = weights.iter().position(|w| !w.is_finite()) {
        return Err(HashError::NonFinite(idx));
    }
    let mut bytes = Vec::with_capacity(8 + 8 * weights.len());
    bytes.extend_from_slice(&(weights.len() as u64).to_le_bytes());
    for w in weights {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    Ok(bytes)
}

/// SHA-256 identifier of a weight vector's canonical serialization.
///
/// Identical vectors give identical identifiers on every platform; any
/// non-finite element is rejected so NaNs cannot be laundered through the
/// ledger.
pub fn canonical_hash(weights: &[f64]) -> Result<Identifier, HashError> {
    let bytes = weights_canonical_bytes(weights)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.into())
}

/// SHA-256 over an arbitrary canonical byte string (used for block hashes
/// and seed derivation).
pub fn sha256(bytes: &[u8]) -> Identifier {
    Sha256::digest(bytes).into()
}
