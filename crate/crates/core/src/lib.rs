//! Closed-form constrained minimum trace factor analysis (CMTFA) for
//! covariance matrices generated by a latent star.
//!
//! A star covariance has unit diagonal and off-diagonal entries `α_i α_j`.
//! Its CMTFA solution is either the rank-1 matrix `αα'` (when the edge
//! weights are non-dominant) or a rank `n-1` matrix with a modified diagonal
//! (when the largest weight dominates the sum of the others). This crate
//! computes both closed forms, builds and checks their optimality
//! certificates, cross-checks them against two independent numerical
//! oracles, and evaluates the cluster-combination probability conditions
//! for assembling several stars into a Gaussian tree.
//!
//! Module map:
//!
//! * [`model`]: edge weights, the star covariance, decompositions, sampling
//! * [`dominance`]: dominant / non-dominant / boundary classification
//! * [`solver`]: the two closed forms and the trace advantage
//! * [`certificate`]: null-space witnesses and the optimality check
//! * [`oracle`]: brute-force grid search and barrier ascent oracles
//! * [`treesim`]: non-dominance probabilities and cluster feasibility
//! * [`cli`]: the `cmtfa` command-line front end

pub mod certificate;
pub mod cli;
pub mod dominance;
pub mod error;
pub mod format;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod solver;
pub mod treesim;

pub use error::{CmtfaError, Result};
pub use model::{EdgeWeightVector, FactorDecomposition, SolutionBranch, StarCovariance};
