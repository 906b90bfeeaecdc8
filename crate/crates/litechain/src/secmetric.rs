//! Exact consensus-security probability of a committee with heterogeneous
//! reliabilities.
//!
//! A committee of size K tolerates at most `floor((K-1)/3)` faulty members.
//! Each member j fails independently with probability `1 - p_j`, so the
//! security score is the Poisson-binomial tail `P(failures <= budget)`.
//! Two routes compute it: direct enumeration of failure subsets (the
//! defining sum, exponential in the budget) and the discrete-Fourier
//! characteristic-function method, exact in O(K^2).
//!
//! Note: published statements of this metric disagree on whether the
//! malicious set carries `p_j` or `1 - p_j` factors. This module fixes the
//! BFT reading — a member *fails* with probability `1 - p_j` — and the
//! enumeration below is the authoritative definition the DFT path is
//! validated against.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SecurityError {
    #[error("reliability {value} at index {index} outside [0, 1]")]
    InvalidReliability { index: usize, value: f64 },
    #[error("empty committee")]
    EmptyCommittee,
    #[error("committee of {0} exceeds the enumeration guard of {MAX_ENUM_SIZE}; use security_dft")]
    EnumerationGuard(usize),
    #[error("numerical instability: imaginary residue {0:e} exceeds 1e-8")]
    NumericalInstability(f64),
}

/// Enumeration guard: subsets of a larger committee are too many to walk.
pub const MAX_ENUM_SIZE: usize = 25;

/// A consensus committee described by its member reliabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Committee {
    reliabilities: Vec<f64>,
}

impl Committee {
    pub fn new(reliabilities: Vec<f64>) -> Result<Self, SecurityError> {
        if reliabilities.is_empty() {
            return Err(SecurityError::EmptyCommittee);
        }
        for (index, &value) in reliabilities.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(SecurityError::InvalidReliability { index, value });
            }
        }
        Ok(Self { reliabilities })
    }

    pub fn len(&self) -> usize {
        self.reliabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reliabilities.is_empty()
    }

    pub fn reliabilities(&self) -> &[f64] {
        &self.reliabilities
    }

    /// BFT fault budget `floor((K-1)/3)`.
    pub fn fault_budget(&self) -> usize {
        (self.len() - 1) / 3
    }
}

/// Consensus security by direct enumeration: the sum over all failure
/// subsets of size at most `floor((K-1)/3)` of the probability that exactly
/// that subset fails. Guarded to committees of at most [`MAX_ENUM_SIZE`].
pub fn security_enum(committee: &Committee) -> Result<f64, SecurityError> {
    let k = committee.len();
    if k > MAX_ENUM_SIZE {
        return Err(SecurityError::EnumerationGuard(k));
    }
    let p = committee.reliabilities();
    let all_pass: f64 = p.iter().product();
    let budget = committee.fault_budget();

    // Walk subsets of failed members up to the budget by recursion; each
    // level multiplies in one member's failure factor (1-p_j)/p_j relative
    // to the all-pass product. Members with p_j = 0 cannot use the ratio
    // trick, so the product is rebuilt per subset in that (rare) case.
    let exact_zero = p.contains(&0.0);
    let mut total = 0.0f64;
    let mut chosen: Vec<usize> = Vec::with_capacity(budget);

    fn subset_prob(p: &[f64], failed: &[usize]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(j, &pj)| if failed.contains(&j) { 1.0 - pj } else { pj })
            .product()
    }

    fn walk(
        p: &[f64],
        budget: usize,
        start: usize,
        chosen: &mut Vec<usize>,
        all_pass: f64,
        exact_zero: bool,
        total: &mut f64,
    ) {
        let prob = if exact_zero {
            subset_prob(p, chosen)
        } else {
            chosen
                .iter()
                .fold(all_pass, |acc, &j| acc / p[j] * (1.0 - p[j]))
        };
        *total += prob;
        if chosen.len() == budget {
            return;
        }
        for j in start..p.len() {
            chosen.push(j);
            walk(p, budget, j + 1, chosen, all_pass, exact_zero, total);
            chosen.pop();
        }
    }

    walk(p, budget, 0, &mut chosen, all_pass, exact_zero, &mut total);
    Ok(total.clamp(0.0, 1.0))
}

/// Consensus security with the default BFT fault budget via the DFT
/// characteristic-function method.
pub fn security(committee: &Committee) -> Result<f64, SecurityError> {
    security_dft(committee, committee.fault_budget())
}

/// Poisson-binomial CDF `P(failures <= fault_budget)` by the discrete
/// Fourier transform of the characteristic function:
///
/// `S = 1/(K+1) sum_k sum_{M=0}^{budget} e^{-i w k M} prod_j [1 - q_j + q_j e^{i w k}]`
///
/// with `w = 2 pi / (K+1)` and per-member failure probability
/// `q_j = 1 - p_j`. The imaginary residue must vanish to 1e-8; the real
/// part is clamped to [0, 1].
pub fn security_dft(committee: &Committee, fault_budget: usize) -> Result<f64, SecurityError> {
    let k = committee.len();
    if fault_budget >= k {
        // Every outcome has at most K failures; the tail is certain.
        return Ok(1.0);
    }
    // Degenerate committees have exact tails: no failures are possible
    // when everyone is fully reliable, and exactly K > budget failures
    // occur when nobody is.
    if committee.reliabilities().iter().all(|&p| p == 1.0) {
        return Ok(1.0);
    }
    if committee.reliabilities().iter().all(|&p| p == 0.0) {
        return Ok(0.0);
    }
    let omega = 2.0 * PI / (k as f64 + 1.0);
    let mut sum_re = 0.0f64;
    let mut sum_im = 0.0f64;
    for l in 0..=k {
        let theta = omega * l as f64;
        let (sin_t, cos_t) = theta.sin_cos();
        // prod_j [1 - q_j + q_j e^{i theta}], q_j = 1 - p_j
        let mut prod_re = 1.0f64;
        let mut prod_im = 0.0f64;
        for &p in committee.reliabilities() {
            let q = 1.0 - p;
            let f_re = 1.0 - q + q * cos_t;
            let f_im = q * sin_t;
            let re = prod_re * f_re - prod_im * f_im;
            prod_im = prod_re * f_im + prod_im * f_re;
            prod_re = re;
        }
        // sum_{M=0}^{budget} e^{-i theta M}
        let mut g_re = 0.0f64;
        let mut g_im = 0.0f64;
        for m in 0..=fault_budget {
            let phi = theta * m as f64;
            g_re += phi.cos();
            g_im -= phi.sin();
        }
        sum_re += g_re * prod_re - g_im * prod_im;
        sum_im += g_re * prod_im + g_im * prod_re;
    }
    let scale = 1.0 / (k as f64 + 1.0);
    let residue = (sum_im * scale).abs();
    if residue > 1e-8 {
        return Err(SecurityError::NumericalInstability(residue));
    }
    Ok((sum_re * scale).clamp(0.0, 1.0))
}
