//! Staleness-aware asynchronous inter-cluster aggregation.
//!
//! Committee members keep a running weighted sum of every cluster's latest
//! committed model. A cluster that commits a fresh model at round `t`
//! replaces its own stale term: the term's weight is `s (t - tau + 1)^{-q}`
//! where `tau` is the round the fresh model was trained from, so a fresh
//! contribution carries weight `s` and older ones decay polynomially.

use std::collections::BTreeMap;

use crate::core::ClusterId;

/// `s (t - tau + 1)^{-q}` for a model trained at `tau` aggregated at `t`.
///
/// Panics in debug builds when `t < tau`; staleness is never negative.
pub fn staleness_weight(base: f64, q: f64, tau: u64, t: u64) -> f64 {
    debug_assert!(t >= tau, "staleness requires t >= tau");
    base * ((t - tau + 1) as f64).powf(-q)
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    weight: f64,
    model: Vec<f64>,
    round: u64,
}

/// The running inter-cluster aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct StalenessAggregator {
    base: f64,
    q: f64,
    terms: BTreeMap<ClusterId, Term>,
    dim: usize,
}

impl StalenessAggregator {
    /// Bootstraps every cluster's term with the shared initial model at
    /// full weight `base`, so the running sum is well-defined before any
    /// commit. With `base = 1/K` the bootstrap aggregate equals the
    /// initial model exactly.
    pub fn new(clusters: &[ClusterId], init_model: &[f64], base: f64, q: f64) -> Self {
        let terms = clusters
            .iter()
            .map(|&c| {
                (
                    c,
                    Term {
                        weight: base,
                        model: init_model.to_vec(),
                        round: 0,
                    },
                )
            })
            .collect();
        Self {
            base,
            q,
            terms,
            dim: init_model.len(),
        }
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Current running sum over all cluster terms, in ascending cluster id
    /// order for bit-reproducibility.
    pub fn current(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for term in self.terms.values() {
            for (o, &w) in out.iter_mut().zip(&term.model) {
                *o += term.weight * w;
            }
        }
        out
    }

    /// Replaces cluster `k`'s stale contribution with its fresh model
    /// trained at `tau` and aggregated now at `t`, returning the new
    /// running sum (the model the cluster trains from next).
    pub fn refresh(&mut self, cluster: ClusterId, fresh: &[f64], tau: u64, t: u64) -> Vec<f64> {
        debug_assert_eq!(fresh.len(), self.dim);
        let weight = staleness_weight(self.base, self.q, tau, t);
        self.terms.insert(
            cluster,
            Term {
                weight,
                model: fresh.to_vec(),
                round: tau,
            },
        );
        self.current()
    }

    /// Resets every term to the given synchronized model at full weight;
    /// used when an update consensus synchronizes model versions.
    pub fn resync(&mut self, model: &[f64], round: u64) {
        for term in self.terms.values_mut() {
            term.weight = self.base;
            term.model = model.to_vec();
            term.round = round;
        }
    }

    /// Round of cluster `k`'s current term.
    pub fn term_round(&self, cluster: ClusterId) -> Option<u64> {
        self.terms.get(&cluster).map(|t| t.round)
    }
}
