use thiserror::Error;

use crate::dominance::DominanceBranch;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmtfaError {
    /// An edge weight is outside `0 < |α| < 1` (or not finite).
    #[error("edge weight alpha[{index}] = {value} is outside 0 < |alpha| < 1")]
    DomainViolation { index: usize, value: f64 },

    #[error("a star needs at least 2 edge weights, got {0}")]
    TooFewWeights(usize),

    #[error("{op} is not valid for a {actual} edge-weight vector")]
    BranchMismatch {
        op: &'static str,
        actual: DominanceBranch,
    },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no feasible point found on the coarsest grid")]
    Infeasible,
}

pub type Result<T> = std::result::Result<T, CmtfaError>;
