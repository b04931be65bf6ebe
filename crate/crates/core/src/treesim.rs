//! Random clusters and the odds that they can be joined into a tree.
//!
//! Magnitudes `|α_i|` are iid uniform on `(0,1)`. A designated magnitude
//! fails to dominate the rest with probability `1 - 1/n!`, and that law
//! drives the tree conditions: for `m` clusters of sizes `n_1..n_m` with
//! required joint probability `δ`, the mean of `n_i!` must reach
//! `1/(1 - δ^{1/m})`, and `n_min!` reaching it is enough. The Monte Carlo
//! routines sample clusters as they are, with any element free to dominate.

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dominance::{classify_magnitudes, DominanceBranch};
use crate::error::{CmtfaError, Result};
use crate::rng;

/// Relative guard band applied to both feasibility inequalities.
pub const GUARD_BAND: f64 = 1e-12;

/// Largest `n` whose factorial fits in a `u128`.
const EXACT_FACTORIAL_MAX: u64 = 34;

/// Observable counts of `m` clusters and the required joint probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClusterRepr", into = "ClusterRepr")]
pub struct ClusterSpec {
    sizes: Vec<u64>,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
struct ClusterRepr {
    sizes: Vec<u64>,
    delta: f64,
}

impl TryFrom<ClusterRepr> for ClusterSpec {
    type Error = CmtfaError;

    fn try_from(repr: ClusterRepr) -> Result<Self> {
        ClusterSpec::new(repr.sizes, repr.delta)
    }
}

impl From<ClusterSpec> for ClusterRepr {
    fn from(spec: ClusterSpec) -> Self {
        ClusterRepr {
            sizes: spec.sizes,
            delta: spec.delta,
        }
    }
}

impl ClusterSpec {
    pub fn new(sizes: Vec<u64>, delta: f64) -> Result<Self> {
        if sizes.is_empty() {
            return Err(CmtfaError::InvalidParameter("at least one cluster is required".into()));
        }
        if let Some(&n) = sizes.iter().find(|&&n| n < 2) {
            return Err(CmtfaError::InvalidParameter(format!(
                "every cluster needs at least 2 observables, got {n}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(CmtfaError::InvalidParameter(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(Self { sizes, delta })
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn clusters(&self) -> usize {
        self.sizes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// 95% normal-approximation half-width.
    pub half_width: f64,
    pub trials: u64,
}

impl McEstimate {
    fn from_hits(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        Self {
            estimate: p,
            half_width: 1.96 * (p * (1.0 - p) / trials as f64).sqrt(),
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCheck {
    /// Kolmogorov-Smirnov distance between the accepted sums and `t^{n-1}`.
    pub max_deviation: f64,
    pub accepted: usize,
    /// Fraction of leave-one-out sums below 1.
    pub empirical_mass: f64,
    /// `1/(n-1)!`.
    pub expected_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeFeasibilityReport {
    pub necessary_holds: bool,
    pub sufficient_holds: bool,
    pub exact_joint_probability: f64,
    pub meets_delta: bool,
    /// `1/(1 - δ^{1/m})`.
    pub threshold: f64,
    pub guard_band: f64,
    pub mc_estimate: Option<McEstimate>,
}

fn exact_factorial(n: u64) -> Option<u128> {
    (n <= EXACT_FACTORIAL_MAX).then(|| (2..=n as u128).product())
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn check_cluster_size(n: u64) -> Result<()> {
    if n < 2 {
        return Err(CmtfaError::InvalidParameter(format!(
            "a cluster needs at least 2 observables, got {n}"
        )));
    }
    Ok(())
}

/// `1 - 1/k!`, exact while `k!` fits in a `u128`.
fn one_minus_inverse_factorial(k: u64) -> f64 {
    match exact_factorial(k) {
        Some(f) => 1.0 - 1.0 / f as f64,
        None => -(-ln_factorial(k)).exp_m1(),
    }
}

/// `1 - 1/n!`: the probability that one designated magnitude does not
/// exceed the sum of the other `n - 1`.
///
/// This is the law used by the tree-feasibility conditions. Since any of the
/// `n` magnitudes may dominate, the probability that no element dominates is
/// smaller; see [`prob_no_dominant_element`].
pub fn prob_nondominant(n: u64) -> Result<f64> {
    check_cluster_size(n)?;
    Ok(one_minus_inverse_factorial(n))
}

/// `1 - n/n! = 1 - 1/(n-1)!`: the probability that no magnitude exceeds the
/// sum of the others. The events "element `i` dominates" are disjoint and
/// each has probability `1/n!`. This is what [`mc_prob_nondominant`]
/// estimates.
pub fn prob_no_dominant_element(n: u64) -> Result<f64> {
    check_cluster_size(n)?;
    Ok(one_minus_inverse_factorial(n - 1))
}

fn uniform_magnitudes<R: Rng>(rng: &mut R, n: usize, out: &mut [f64]) {
    for x in out.iter_mut().take(n) {
        *x = rng.sample(Open01);
    }
}

fn is_nondominant(magnitudes: &[f64]) -> bool {
    classify_magnitudes(magnitudes, 0.0).branch != DominanceBranch::Dominant
}

/// Fraction of `trials` uniform stars of size `n` that are non-dominant.
/// Any position may hold the largest magnitude.
pub fn mc_prob_nondominant(n: usize, trials: u64, seed: u64) -> Result<McEstimate> {
    if n < 2 || trials == 0 {
        return Err(CmtfaError::InvalidParameter(format!(
            "need n >= 2 and trials >= 1, got n = {n}, trials = {trials}"
        )));
    }
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k);
            let mut m = vec![0.0; n];
            uniform_magnitudes(&mut rng, n, &mut m);
            u64::from(is_nondominant(&m))
        })
        .sum();
    Ok(McEstimate::from_hits(hits, trials))
}

/// Pools every leave-one-out sum `S_i = Σ_{j≠i}|α_j|` below 1 and measures
/// its distance from the conditional law `P(S ≤ t | S < 1) = t^{n-1}`.
pub fn density_sum_check(n: usize, trials: u64, seed: u64) -> Result<DensityCheck> {
    if n < 3 || trials == 0 {
        return Err(CmtfaError::InvalidParameter(format!(
            "need n >= 3 and trials >= 1, got n = {n}, trials = {trials}"
        )));
    }
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k);
            let mut m = vec![0.0; n];
            uniform_magnitudes(&mut rng, n, &mut m);
            let total: f64 = m.iter().sum();
            m.iter().map(|a| total - a).filter(|&s| s < 1.0).collect()
        })
        .collect();
    let mut sums: Vec<f64> = per_trial.into_iter().flatten().collect();
    sums.sort_by(f64::total_cmp);
    let count = sums.len();
    let exponent = (n - 1) as i32;
    let max_deviation = sums
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let model = s.powi(exponent);
            let below = i as f64 / count as f64;
            let above = (i + 1) as f64 / count as f64;
            (model - below).abs().max((above - model).abs())
        })
        .fold(if count == 0 { 1.0 } else { 0.0 }, f64::max);
    Ok(DensityCheck {
        max_deviation,
        accepted: count,
        empirical_mass: count as f64 / (n as f64 * trials as f64),
        expected_mass: (-ln_factorial(n as u64 - 1)).exp(),
    })
}

/// Compares `lhs` (given as an exact value or a logarithm) with
/// `threshold·(1 + rel)`.
fn at_least(lhs: Magnitude, threshold: f64, rel: f64) -> bool {
    let bound = threshold * (1.0 + rel);
    match lhs {
        Magnitude::Exact(v) => v >= bound,
        Magnitude::Log(l) => l >= bound.ln(),
    }
}

#[derive(Clone, Copy)]
enum Magnitude {
    Exact(f64),
    Log(f64),
}

fn mean_factorial(sizes: &[u64]) -> Magnitude {
    let m = sizes.len() as f64;
    let exact: Option<u128> = sizes
        .iter()
        .map(|&n| exact_factorial(n))
        .try_fold(0u128, |acc, f| f.and_then(|f| acc.checked_add(f)));
    match exact {
        Some(total) => Magnitude::Exact(total as f64 / m),
        None => {
            let logs: Vec<f64> = sizes.iter().map(|&n| ln_factorial(n)).collect();
            let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logs.iter().map(|l| (l - peak).exp()).sum();
            Magnitude::Log(peak + sum.ln() - m.ln())
        }
    }
}

fn factorial_magnitude(n: u64) -> Magnitude {
    match exact_factorial(n) {
        Some(f) => Magnitude::Exact(f as f64),
        None => Magnitude::Log(ln_factorial(n)),
    }
}

/// Evaluates the necessary (mean factorial) and sufficient (smallest
/// factorial) conditions, the exact joint probability, and optionally a
/// Monte Carlo estimate drawing all `m` clusters per trial.
///
/// The necessary test passes within the guard band below the threshold and
/// the sufficient test only beyond the band above it, so representation
/// noise never breaks `sufficient ⇒ exact ≥ δ ⇒ necessary`.
pub fn check_tree_feasibility(
    spec: &ClusterSpec,
    mc_trials: Option<u64>,
    seed: u64,
) -> Result<TreeFeasibilityReport> {
    let m = spec.clusters() as f64;
    let threshold = -1.0 / (spec.delta.ln() / m).exp_m1();
    let n_min = *spec.sizes.iter().min().expect("validated non-empty");

    let necessary_holds = at_least(mean_factorial(&spec.sizes), threshold, -GUARD_BAND);
    let sufficient_holds = at_least(factorial_magnitude(n_min), threshold, GUARD_BAND);
    let exact_joint_probability = spec
        .sizes
        .iter()
        .map(|&n| prob_nondominant(n).expect("validated size"))
        .product::<f64>();

    let mc_estimate = match mc_trials {
        None => None,
        Some(0) => {
            return Err(CmtfaError::InvalidParameter("mc_trials must be at least 1".into()));
        }
        Some(trials) => {
            let widest = *spec.sizes.iter().max().expect("validated non-empty") as usize;
            let hits: u64 = (0..trials)
                .into_par_iter()
                .map(|k| {
                    let mut rng = rng::stream(seed, k);
                    let mut m = vec![0.0; widest];
                    let all = spec.sizes.iter().all(|&n| {
                        let n = n as usize;
                        uniform_magnitudes(&mut rng, n, &mut m);
                        is_nondominant(&m[..n])
                    });
                    u64::from(all)
                })
                .sum();
            Some(McEstimate::from_hits(hits, trials))
        }
    };

    Ok(TreeFeasibilityReport {
        necessary_holds,
        sufficient_holds,
        exact_joint_probability,
        meets_delta: exact_joint_probability >= spec.delta,
        threshold,
        guard_band: GUARD_BAND,
        mc_estimate,
    })
}
