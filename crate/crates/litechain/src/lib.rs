//! LiteChain simulator: a deterministic discrete-event model of a two-tier,
//! blockchain-verified federated learning protocol for large edge networks.
//!
//! The library is organized around the protocol stack:
//!
//! * [`core`] — shared domain types, the canonical hash-identifier scheme,
//!   and the splittable deterministic PRNG every run is derived from.
//! * [`radio`] — free-space path loss, Shannon rates, and the per-phase
//!   latency and communication-complexity accounting.
//! * [`secmetric`] — exact consensus-security probability of a committee
//!   (brute-force enumeration and the DFT characteristic-function path).
//! * [`clustering`] — the coalition-game that reorganizes a flat network
//!   into a Nash-stable two-tier partition.
//! * [`consensus`] — the hash-chained ledger, the CBFT commit state machine,
//!   and the periodic update consensus with reputation and pruning.
//! * [`fl`] — desk-scale federated training: local SGD, verified FedAvg,
//!   and staleness-aware asynchronous inter-cluster aggregation.
//! * [`adversary`] — replay attackers, label-flip poisoners, and forced-no
//!   committee voters.
//! * [`harness`] — scenario configuration, the simulated round loop,
//!   metrics export, and the report generators behind the CLI.

pub mod adversary;
pub mod clustering;
pub mod consensus;
pub mod core;
pub mod fl;
pub mod harness;
pub mod radio;
pub mod secmetric;
