//! Optimality certificates for the closed-form CMTFA solutions.
//!
//! `D*` solves CMTFA iff `D* ≥ 0`, `λ_min(Σx - D*) = 0`, and there is a
//! matrix `T` whose columns lie in the null space of `Σx - D*` and whose
//! squared row norms equal one, up to non-negative multipliers on rows where
//! `D*_ii = 0`:
//!
//! ```text
//! 1 = Σ_i t_{*,i}²  -  Σ_{j ∈ I(D*)} μ_j ξ_j
//! ```
//!
//! For non-dominant weights `T = V·B`, where the columns of `V` span
//! `null(αα')` and `B = diag(√β)` balances the row norms. For dominant
//! weights the single column `Φ ∈ {±1}ⁿ` spans the null space of the rank
//! `n-1` solution. Both constructions work in the magnitude-sorted view and
//! return rows in the caller's order.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dominance::{classify_default, DominanceBranch};
use crate::error::{CmtfaError, Result};
use crate::linalg;
use crate::model::{sort_profile, EdgeWeightVector, FactorDecomposition, StarCovariance};
use crate::rng;

/// How the signs `c_j` of the combined null-space column were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignRule {
    /// `c_j α_(j) = |α_(j)|`; valid while `α_(1)² ≥ Σ_{j≥2} α_(j)²`.
    Aligned,
    /// Greedy alternation keeping `|Σ c_j α_(j)| ≤ |α_(1)|`; used when the
    /// aligned choice would make `β_nn` negative.
    Balanced,
}

/// Diagonal of `β = BB'` together with the signs `c_2..c_n` (sorted view).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaDiagonal {
    pub beta: Vec<f64>,
    pub c: Vec<f64>,
    pub sign_rule: SignRule,
}

impl BetaDiagonal {
    pub fn beta_nn(&self) -> f64 {
        *self.beta.last().expect("beta is non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WitnessKind {
    /// `T = V·B` for the rank-1 solution.
    NullSpaceBasis,
    /// The sign vector `Φ` for the rank `n-1` solution.
    SignVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityCertificate {
    /// `n × r`; columns must lie in the null space of `Σt`.
    pub witness: DMatrix<f64>,
    /// `μ_j` keyed by row index; only rows with `d_j = 0` may carry one.
    pub multipliers: BTreeMap<usize, f64>,
    pub kind: WitnessKind,
}

impl OptimalityCertificate {
    pub fn r(&self) -> usize {
        self.witness.ncols()
    }

    pub fn witness_rank(&self) -> usize {
        linalg::numerical_rank(&self.witness)
    }

    /// Squared norm of each witness row.
    pub fn row_norms_squared(&self) -> Vec<f64> {
        self.witness.row_iter().map(|r| r.norm_squared()).collect()
    }
}

impl Serialize for OptimalityCertificate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            kind: WitnessKind,
            witness: Vec<Vec<f64>>,
            multipliers: &'a BTreeMap<usize, f64>,
            r: usize,
            witness_rank: usize,
        }
        Repr {
            kind: self.kind,
            witness: linalg::to_rows(&self.witness),
            multipliers: &self.multipliers,
            r: self.r(),
            witness_rank: self.witness_rank(),
        }
        .serialize(s)
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Signs `c_2..c_n` for sorted signed weights `s`.
fn choose_signs(s: &[f64]) -> (Vec<f64>, SignRule) {
    let lead_sq = s[0] * s[0];
    let tail_sq: f64 = s[1..].iter().map(|x| x * x).sum();
    if lead_sq >= tail_sq {
        return (s[1..].iter().map(|&x| sign(x)).collect(), SignRule::Aligned);
    }
    // Magnitudes are non-increasing and bounded by |s[0]|, so pushing the
    // running sum back toward zero keeps it inside [-|s[0]|, |s[0]|].
    let mut running = 0.0;
    let c = s[1..]
        .iter()
        .map(|&x| {
            let cj = if running > 0.0 { -sign(x) } else { sign(x) };
            running += cj * x;
            cj
        })
        .collect();
    (c, SignRule::Balanced)
}

/// Null-space matrix in the sorted view for the given signs.
fn sorted_null_basis(s: &[f64], c: &[f64]) -> DMatrix<f64> {
    let n = s.len();
    let mut v = DMatrix::zeros(n, n);
    for k in 1..n {
        v[(0, k - 1)] = -s[k] / s[0];
        v[(k, k - 1)] = 1.0;
        v[(k, n - 1)] = c[k - 1];
    }
    let combined: f64 = s[1..].iter().zip(c).map(|(x, cj)| cj * x).sum();
    v[(0, n - 1)] = -combined / s[0];
    v
}

/// `n × n` matrix whose columns span `null(αα')`: the first `n-1` columns
/// are the basis vectors `e_j - (α_(j)/α_(1)) e_1` and the last is their
/// `c`-weighted sum. Rows are in the caller's order.
pub fn build_null_basis(alpha: &EdgeWeightVector) -> DMatrix<f64> {
    let profile = sort_profile(alpha);
    let s = profile.to_sorted(alpha.as_slice());
    let (c, _) = choose_signs(&s);
    profile.rows_to_original(&sorted_null_basis(&s, &c))
}

pub fn build_beta(alpha: &EdgeWeightVector) -> Result<BetaDiagonal> {
    let n = alpha.len();
    if n < 3 {
        return Err(CmtfaError::Dimension(
            "beta needs n >= 3; the cross-term sum is empty for n = 2".into(),
        ));
    }
    let verdict = classify_default(alpha);
    if verdict.branch == DominanceBranch::Dominant {
        return Err(CmtfaError::BranchMismatch {
            op: "build_beta",
            actual: verdict.branch,
        });
    }
    let s = sort_profile(alpha).to_sorted(alpha.as_slice());
    let (c, sign_rule) = choose_signs(&s);
    let tail: Vec<f64> = s[1..].iter().zip(&c).map(|(x, cj)| cj * x).collect();
    let numerator = s[0] * s[0] - tail.iter().map(|x| x * x).sum::<f64>();
    let mut cross = 0.0;
    for i in 0..tail.len() {
        for j in (i + 1)..tail.len() {
            cross += tail[i] * tail[j];
        }
    }
    let denominator = 2.0 * cross;
    let beta_nn = if verdict.branch == DominanceBranch::Boundary {
        1.0
    } else if numerator == 0.0 {
        0.0
    } else {
        (numerator / denominator).clamp(0.0, 1.0)
    };
    let mut beta = vec![1.0 - beta_nn; n - 1];
    beta.push(beta_nn);
    Ok(BetaDiagonal { beta, c, sign_rule })
}

/// Certificate for the rank-1 solution of non-dominant or boundary weights.
pub fn build_certificate_nondominant(alpha: &EdgeWeightVector) -> Result<OptimalityCertificate> {
    let verdict = classify_default(alpha);
    if verdict.branch == DominanceBranch::Dominant {
        return Err(CmtfaError::BranchMismatch {
            op: "build_certificate_nondominant",
            actual: verdict.branch,
        });
    }
    let profile = sort_profile(alpha);
    let s = profile.to_sorted(alpha.as_slice());
    let beta = if alpha.len() == 2 {
        // only |α_1| = |α_2| reaches here; put all weight on the combined column
        BetaDiagonal {
            beta: vec![0.0, 1.0],
            c: vec![sign(s[1])],
            sign_rule: SignRule::Aligned,
        }
    } else {
        build_beta(alpha)?
    };
    let v = sorted_null_basis(&s, &beta.c);
    let b = DMatrix::from_diagonal(&DVector::from_iterator(
        beta.beta.len(),
        beta.beta.iter().map(|x| x.sqrt()),
    ));
    Ok(OptimalityCertificate {
        witness: profile.rows_to_original(&(v * b)),
        multipliers: BTreeMap::new(),
        kind: WitnessKind::NullSpaceBasis,
    })
}

/// Certificate `Φ` for the rank `n-1` solution of dominant weights:
/// `Φ_(1) = 1`, `Φ_(i) = -1` where `α_(1)α_(i) > 0`, else `+1`.
pub fn build_certificate_dominant(alpha: &EdgeWeightVector) -> Result<OptimalityCertificate> {
    let verdict = classify_default(alpha);
    if verdict.branch == DominanceBranch::NonDominant {
        return Err(CmtfaError::BranchMismatch {
            op: "build_certificate_dominant",
            actual: verdict.branch,
        });
    }
    let profile = sort_profile(alpha);
    let s = profile.to_sorted(alpha.as_slice());
    let phi_sorted: Vec<f64> = s
        .iter()
        .enumerate()
        .map(|(k, &x)| if k == 0 || s[0] * x <= 0.0 { 1.0 } else { -1.0 })
        .collect();
    let phi = profile.to_original(&phi_sorted);
    Ok(OptimalityCertificate {
        witness: DMatrix::from_column_slice(phi.len(), 1, &phi),
        multipliers: BTreeMap::new(),
        kind: WitnessKind::SignVector,
    })
}

/// Certificate matching the branch `solve` picks.
pub fn build_certificate(alpha: &EdgeWeightVector) -> Result<OptimalityCertificate> {
    match classify_default(alpha).branch {
        DominanceBranch::Dominant => build_certificate_dominant(alpha),
        _ => build_certificate_nondominant(alpha),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    pub min_d: f64,
    pub lambda_min: f64,
    /// Largest `‖Σt·t‖` over witness columns.
    pub null_space: f64,
    /// Largest deviation of a row identity from one.
    pub row_norms: f64,
    /// Largest entry of `decomp.sigma_t - (Σx - diag(d))`.
    pub reconstruction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub d_nonneg: bool,
    pub lambda_min_zero: bool,
    pub null_space: bool,
    pub row_norms: bool,
    pub reconstruction: bool,
    pub pass: bool,
    /// `I(D*) = {i : d_i ≤ tol}`.
    pub zero_set: Vec<usize>,
    pub residuals: Residuals,
}

/// Checks the optimality conditions for `D* = diag(decomp.d)` against
/// `sigma`. The null-space and eigenvalue checks use `Σx - D*` rebuilt from
/// `sigma`, and the decomposition's own `Σt` must agree with it.
pub fn verify_certificate(
    sigma: &StarCovariance,
    decomp: &FactorDecomposition,
    cert: &OptimalityCertificate,
    tol: f64,
) -> Result<VerificationReport> {
    let n = sigma.dim();
    if decomp.dim() != n || decomp.sigma_t.shape() != (n, n) || cert.witness.nrows() != n {
        return Err(CmtfaError::ShapeMismatch(format!(
            "covariance is {n}x{n}, decomposition has {} entries, witness has {} rows",
            decomp.dim(),
            cert.witness.nrows()
        )));
    }
    let sigma_t = linalg::minus_diagonal(&sigma.matrix, &decomp.d);

    let min_d = decomp.d.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_min = linalg::lambda_min(&sigma_t);
    let null_residual = (&sigma_t * &cert.witness)
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max);

    let zero_set: Vec<usize> = (0..n).filter(|&i| decomp.d[i] <= tol).collect();
    let multipliers_ok = cert
        .multipliers
        .iter()
        .all(|(j, mu)| *mu >= 0.0 && zero_set.contains(j));
    let row_norms_residual = cert
        .row_norms_squared()
        .iter()
        .enumerate()
        .map(|(j, norm)| {
            let mu = cert.multipliers.get(&j).copied().unwrap_or(0.0);
            (norm - mu - 1.0).abs()
        })
        .fold(0.0, f64::max);
    let reconstruction = linalg::max_abs(&(&decomp.sigma_t - &sigma_t));

    let d_nonneg = min_d >= 0.0;
    let lambda_min_zero = lambda_min.abs() <= tol;
    let null_space = null_residual <= tol;
    let row_norms = multipliers_ok && row_norms_residual <= tol;
    let reconstruction_ok = reconstruction <= tol;
    Ok(VerificationReport {
        d_nonneg,
        lambda_min_zero,
        null_space,
        row_norms,
        reconstruction: reconstruction_ok,
        pass: d_nonneg && lambda_min_zero && null_space && row_norms && reconstruction_ok,
        zero_set,
        residuals: Residuals {
            min_d,
            lambda_min,
            null_space: null_residual,
            row_norms: row_norms_residual,
            reconstruction,
        },
    })
}

/// Lower bound on `max_j |‖t_j‖² - 1|` for any `T` with columns in
/// `null(αα')`: rows satisfy `Σ α_j t_j = 0`, so
/// `|α_(1)|·‖t_1‖ ≤ Σ_{j≥2}|α_(j)|·‖t_j‖`. Zero unless dominant.
pub fn unit_row_deviation_bound(alpha: &EdgeWeightVector) -> f64 {
    let m = sort_profile(alpha).magnitudes;
    let lead = m[0] * m[0];
    let tail: f64 = m[1..].iter().sum();
    ((lead - tail * tail) / (lead + tail * tail)).max(0.0)
}

/// Numerically searches for `T = N·G` (`N` an orthonormal basis of
/// `null(αα')`) with unit squared row norms, by gradient descent on
/// `Σ_j (‖t_j‖² - 1)²` from `restarts` seeded starting points. Returns the
/// smallest `max_j |‖t_j‖² - 1|` reached.
pub fn best_unit_row_deviation(
    alpha: &EdgeWeightVector,
    restarts: usize,
    iterations: usize,
    seed: u64,
) -> f64 {
    let n = alpha.len();
    let (_, vectors) = linalg::symmetric_eigen(&crate::solver::rank1_candidate(alpha));
    // eigenvalues ascend: the first n-1 vectors span the null space
    let basis = vectors.columns(0, n - 1).into_owned();
    let deviations = |g: &DMatrix<f64>| -> DVector<f64> {
        let t = &basis * g;
        DVector::from_iterator(n, t.row_iter().map(|r| r.norm_squared() - 1.0))
    };
    let objective = |e: &DVector<f64>| e.norm_squared();

    let mut best = f64::INFINITY;
    for restart in 0..restarts.max(1) {
        let mut rng = rng::stream(seed, restart as u64);
        let mut g = DMatrix::from_fn(n - 1, n - 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut e = deviations(&g);
        let mut f = objective(&e);
        let mut step = 0.1;
        for _ in 0..iterations {
            let weighted = DMatrix::from_fn(n, n - 1, |r, c| e[r] * basis[(r, c)]);
            let grad = basis.transpose() * weighted * &g * 4.0;
            let mut accepted = false;
            while step > 1e-14 {
                let candidate = &g - &grad * step;
                let ce = deviations(&candidate);
                let cf = objective(&ce);
                if cf < f {
                    g = candidate;
                    e = ce;
                    f = cf;
                    step *= 1.5;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted || f < 1e-24 {
                break;
            }
        }
        best = best.min(e.amax());
    }
    best
}
