//! Closed-form CMTFA solutions for a star covariance.
//!
//! Non-dominant (and boundary) weights give the rank-1 star `Σt = αα'`.
//! Dominant weights give a rank `n-1` matrix that keeps the off-diagonal
//! `α_i α_j` and replaces the diagonal. In the magnitude-sorted view with
//! `S = Σ_{i≥2}|α_(i)|`:
//!
//! ```text
//! (Σt)_11 = |α_(1)| · S
//! (Σt)_ii = |α_(i)| · (|α_(1)| - (S - |α_(i)|))      i ≥ 2
//! ```
//!
//! Both forms are computed in the sorted view and mapped back to the
//! caller's order.

use nalgebra::DMatrix;

use crate::dominance::{classify_default, DominanceBranch};
use crate::error::{CmtfaError, Result};
use crate::model::{sort_profile, EdgeWeightVector, FactorDecomposition, SolutionBranch};

/// `αα'`, regardless of dominance.
pub fn rank1_candidate(alpha: &EdgeWeightVector) -> DMatrix<f64> {
    let a = alpha.as_dvector();
    &a * a.transpose()
}

/// The rank `n-1` closed form, regardless of dominance.
pub fn dominant_candidate(alpha: &EdgeWeightVector) -> DMatrix<f64> {
    let a = alpha.as_slice();
    let profile = sort_profile(alpha);
    let m = &profile.magnitudes;
    let tail: f64 = m[1..].iter().sum();
    let sorted_diag: Vec<f64> = m
        .iter()
        .enumerate()
        .map(|(k, &mk)| if k == 0 { mk * tail } else { mk * (m[0] - (tail - mk)) })
        .collect();
    let diag = profile.to_original(&sorted_diag);
    DMatrix::from_fn(a.len(), a.len(), |i, j| if i == j { diag[i] } else { a[i] * a[j] })
}

pub fn solve_rank1(alpha: &EdgeWeightVector) -> Result<FactorDecomposition> {
    let branch = match classify_default(alpha).branch {
        DominanceBranch::NonDominant => SolutionBranch::Rank1,
        DominanceBranch::Boundary => SolutionBranch::Boundary,
        actual @ DominanceBranch::Dominant => {
            return Err(CmtfaError::BranchMismatch {
                op: "solve_rank1",
                actual,
            })
        }
    };
    Ok(FactorDecomposition::from_sigma_t(rank1_candidate(alpha), branch))
}

pub fn solve_rank_n_minus_1(alpha: &EdgeWeightVector) -> Result<FactorDecomposition> {
    let branch = match classify_default(alpha).branch {
        DominanceBranch::Dominant => SolutionBranch::RankNMinus1,
        DominanceBranch::Boundary => SolutionBranch::Boundary,
        actual @ DominanceBranch::NonDominant => {
            return Err(CmtfaError::BranchMismatch {
                op: "solve_rank_n_minus_1",
                actual,
            })
        }
    };
    Ok(FactorDecomposition::from_sigma_t(dominant_candidate(alpha), branch))
}

/// The CMTFA optimum: rank 1 unless the weights are strictly dominant.
pub fn solve(alpha: &EdgeWeightVector) -> FactorDecomposition {
    match classify_default(alpha).branch {
        DominanceBranch::Dominant => FactorDecomposition::from_sigma_t(
            dominant_candidate(alpha),
            SolutionBranch::RankNMinus1,
        ),
        DominanceBranch::NonDominant => {
            FactorDecomposition::from_sigma_t(rank1_candidate(alpha), SolutionBranch::Rank1)
        }
        DominanceBranch::Boundary => {
            FactorDecomposition::from_sigma_t(rank1_candidate(alpha), SolutionBranch::Boundary)
        }
    }
}

/// `Tr(αα') - Tr(Σt,DM)`, i.e. how much trace a forced star fit wastes when
/// the weights are dominant. Evaluated as
/// `|α_(1)|(|α_(1)| - 2S) + S²` with `S = Σ_{i≥2}|α_(i)|`.
pub fn trace_advantage(alpha: &EdgeWeightVector) -> Result<f64> {
    let verdict = classify_default(alpha);
    if verdict.branch == DominanceBranch::NonDominant {
        return Err(CmtfaError::BranchMismatch {
            op: "trace_advantage",
            actual: verdict.branch,
        });
    }
    let m = sort_profile(alpha).magnitudes;
    let tail: f64 = m[1..].iter().sum();
    Ok(m[0] * (m[0] - 2.0 * tail) + tail * tail)
}

/// Traces of both closed forms, `(Tr Σt,ND, Tr Σt,DM)`, with no branch
/// check.
pub fn candidate_traces(alpha: &EdgeWeightVector) -> (f64, f64) {
    (rank1_candidate(alpha).trace(), dominant_candidate(alpha).trace())
}
