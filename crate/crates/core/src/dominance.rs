//! Dominant / non-dominant classification of edge weights.
//!
//! With magnitudes sorted `|α_(1)| ≥ … ≥ |α_(n)|`, the vector is dominant
//! when `|α_(1)|` exceeds the sum of the remaining magnitudes. The sign of
//! the margin `Σ_{i≥2}|α_(i)| - |α_(1)|` selects the CMTFA branch.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{sort_profile, EdgeWeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DominanceBranch {
    Dominant,
    NonDominant,
    Boundary,
}

impl fmt::Display for DominanceBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DominanceBranch::Dominant => "dominant",
            DominanceBranch::NonDominant => "non-dominant",
            DominanceBranch::Boundary => "boundary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceVerdict {
    pub branch: DominanceBranch,
    /// `Σ_{i≥2}|α_(i)| - |α_(1)|` in the sorted view.
    pub margin: f64,
    /// 0-based original index of the largest-magnitude weight; present for
    /// `Dominant` and `Boundary` only.
    pub dominant_index: Option<usize>,
}

impl DominanceVerdict {
    /// Non-dominant in the wide sense (strictly non-dominant or
    /// boundary).
    pub fn admits_rank1(&self) -> bool {
        self.branch != DominanceBranch::Dominant
    }
}

/// Boundary tolerance used when none is given: `1e-12 · n`.
pub fn default_epsilon(n: usize) -> f64 {
    1e-12 * n as f64
}

pub fn classify(alpha: &EdgeWeightVector, epsilon: f64) -> DominanceVerdict {
    let profile = sort_profile(alpha);
    let mut verdict = classify_sorted(&profile.magnitudes, epsilon);
    if verdict.dominant_index.is_some() {
        verdict.dominant_index = Some(profile.lead());
    }
    verdict
}

pub fn classify_default(alpha: &EdgeWeightVector) -> DominanceVerdict {
    classify(alpha, default_epsilon(alpha.len()))
}

/// Classifies raw magnitudes in any order. Used by the Monte Carlo code,
/// which draws magnitudes directly.
pub fn classify_magnitudes(magnitudes: &[f64], epsilon: f64) -> DominanceVerdict {
    let (lead_index, lead) = magnitudes
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &m)| if m > best.1 { (i, m) } else { best });
    let tail: f64 = magnitudes
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != lead_index)
        .map(|(_, m)| m)
        .sum();
    verdict_from(lead_index, tail - lead, epsilon)
}

fn classify_sorted(sorted: &[f64], epsilon: f64) -> DominanceVerdict {
    let tail: f64 = sorted[1..].iter().sum();
    verdict_from(0, tail - sorted[0], epsilon)
}

fn verdict_from(lead_index: usize, margin: f64, epsilon: f64) -> DominanceVerdict {
    let branch = if margin < -epsilon {
        DominanceBranch::Dominant
    } else if margin > epsilon {
        DominanceBranch::NonDominant
    } else {
        DominanceBranch::Boundary
    };
    let dominant_index = (branch != DominanceBranch::NonDominant).then_some(lead_index);
    DominanceVerdict {
        branch,
        margin,
        dominant_index,
    }
}
