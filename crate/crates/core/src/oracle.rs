//! Closed-form-free CMTFA oracles.
//!
//! Both oracles maximize `Σ d_i` subject to `Σx - diag(d) ⪰ 0` and
//! `0 ≤ d ≤ 1` using nothing but eigenvalue/Cholesky feasibility tests, so
//! they can confirm or refute the closed forms independently:
//!
//! * [`brute_force_cmtfa`]: grid search over all but one coordinate with
//!   local refinement, the last coordinate set by bisection (small `n`
//!   only; cost grows as `grid^(n-1)`).
//! * [`projected_descent_cmtfa`]: log-barrier ascent with Newton-scaled
//!   steps, clipping to the box and bisecting back toward the last feasible
//!   iterate whenever a step leaves the PSD cone.
//!
//! [`ascent_probe`] restates optimality directly: from a given `d` it looks
//! for any feasible step that raises `Σ d_i`.

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01 as OpenOpen01;
use rand::Rng;
use serde::Serialize;

use crate::error::{CmtfaError, Result};
use crate::linalg;
use crate::model::StarCovariance;
use crate::rng;

/// PSD tolerance for oracle feasibility: `λ_min(Σx - D) ≥ -FEASIBILITY_TOL`.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const GRID_MAX_DIM: usize = 5;
const DESCENT_MAX_DIM: usize = 64;
/// Grid points on each side of the incumbent in a refinement round.
const REFINE_HALF_WIDTH: i64 = 10;
/// Resolution shrink factor between refinement rounds.
const REFINE_SHRINK: f64 = 5.0;
const RECENTER_LIMIT: usize = 200;
/// Bracket width at which the last-coordinate bisection stops.
const LINE_SEARCH_WIDTH: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OracleMethod {
    GridRefine,
    ProjectedDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleMeta {
    /// Grid spacing of the last round (grid oracle).
    pub final_resolution: Option<f64>,
    /// `Tr(Σx - D)` of the incumbent after the coarse pass and each
    /// refinement round (grid oracle); non-increasing.
    pub round_traces: Vec<f64>,
    /// Newton iterations (descent) or feasibility tests (grid).
    pub iterations: usize,
    pub converged: bool,
    /// Duality-gap bound `2n·t` at the final barrier weight (descent).
    pub gap_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub best_d: Vec<f64>,
    /// `Tr(Σx - diag(best_d))`.
    pub best_trace: f64,
    pub method: OracleMethod,
    pub meta: OracleMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub lambda_min: f64,
}

/// `d ≥ -tol` entrywise and `λ_min(Σx - diag(d)) ≥ -tol`.
pub fn feasibility_check(sigma: &StarCovariance, d: &[f64], tol: f64) -> Result<Feasibility> {
    check_len(sigma, d)?;
    let lambda_min = linalg::lambda_min(&linalg::minus_diagonal(&sigma.matrix, d));
    Ok(Feasibility {
        feasible: d.iter().all(|&x| x >= -tol) && lambda_min >= -tol,
        lambda_min,
    })
}

fn check_len(sigma: &StarCovariance, d: &[f64]) -> Result<()> {
    if d.len() != sigma.dim() {
        return Err(CmtfaError::ShapeMismatch(format!(
            "diagonal has {} entries, covariance is {}x{}",
            d.len(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    Ok(())
}

fn trace_of(sigma: &StarCovariance, d: &[f64]) -> f64 {
    sigma.matrix.trace() - d.iter().sum::<f64>()
}

/// Feasibility counter for the grid search.
struct GridProbe<'a> {
    sigma: &'a StarCovariance,
    scratch: DMatrix<f64>,
    tests: usize,
}

impl<'a> GridProbe<'a> {
    fn new(sigma: &'a StarCovariance) -> Self {
        Self {
            sigma,
            scratch: sigma.matrix.clone(),
            tests: 0,
        }
    }

    fn feasible(&mut self, d: &[f64]) -> bool {
        self.tests += 1;
        for (i, di) in d.iter().enumerate() {
            self.scratch[(i, i)] = self.sigma.matrix[(i, i)] - di;
        }
        linalg::psd_within(&self.scratch, FEASIBILITY_TOL)
    }
}

/// Grid values `center + k·h` inside `[0, 1]` for `|k| ≤ half_width`.
fn axis(center: f64, h: f64, half_width: i64) -> Vec<f64> {
    (-half_width..=half_width)
        .map(|k| center + k as f64 * h)
        .filter(|&x| (-1e-12..=1.0 + 1e-12).contains(&x))
        .map(|x| x.clamp(0.0, 1.0))
        .collect()
}

/// One pass: every prefix of `d` on the grid `axes`, the last coordinate
/// pushed as high as feasibility allows by bisection (feasibility only
/// improves as `d_n` decreases). Returns the best `d` if it beats
/// `incumbent`.
fn grid_pass(
    probe: &mut GridProbe<'_>,
    axes: &[Vec<f64>],
    incumbent: Option<(&[f64], f64)>,
) -> Option<(Vec<f64>, f64)> {
    let n = axes.len() + 1;
    let mut best: Option<(Vec<f64>, f64)> = incumbent.map(|(d, s)| (d.to_vec(), s));
    let mut idx = vec![0usize; n - 1];
    let mut d = vec![0.0; n];
    loop {
        for (k, &i) in idx.iter().enumerate() {
            d[k] = axes[k][i];
        }
        d[n - 1] = 0.0;
        if probe.feasible(&d) {
            d[n - 1] = 1.0;
            if !probe.feasible(&d) {
                let (mut lo, mut hi) = (0.0, 1.0);
                while hi - lo > LINE_SEARCH_WIDTH {
                    let mid = 0.5 * (lo + hi);
                    d[n - 1] = mid;
                    if probe.feasible(&d) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                d[n - 1] = lo;
            }
            let score: f64 = d.iter().sum();
            // strict improvement: earlier (lexicographically smaller) d wins ties
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((d.clone(), score));
            }
        }
        // odometer over the prefix
        let mut k = n - 1;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Grid search over the first `n - 1` coordinates of `d ∈ [0,1]ⁿ` at
/// spacing `resolution`, with the last coordinate maximized by bisection.
/// Each of the `refine_rounds` rounds shrinks the spacing `REFINE_SHRINK`
/// times and searches `±REFINE_HALF_WIDTH` points around the incumbent,
/// re-centering until a pass brings no gain.
pub fn brute_force_cmtfa(
    sigma: &StarCovariance,
    resolution: f64,
    refine_rounds: usize,
) -> Result<OracleResult> {
    let n = sigma.dim();
    if n > GRID_MAX_DIM {
        return Err(CmtfaError::Dimension(format!(
            "grid oracle supports n <= {GRID_MAX_DIM}, got {n}"
        )));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(CmtfaError::InvalidParameter(format!(
            "resolution must lie in (0, 1], got {resolution}"
        )));
    }
    let mut probe = GridProbe::new(sigma);
    let steps = (1.0 / resolution - 1e-9).ceil() as usize;
    let full: Vec<f64> = (0..=steps).map(|k| (k as f64 * resolution).min(1.0)).collect();
    let coarse = vec![full; n - 1];
    let (mut best_d, mut best_score) =
        grid_pass(&mut probe, &coarse, None).ok_or(CmtfaError::Infeasible)?;
    let mut round_traces = vec![trace_of(sigma, &best_d)];

    let mut h = resolution;
    for _ in 0..refine_rounds {
        h /= REFINE_SHRINK;
        for _ in 0..RECENTER_LIMIT {
            let axes: Vec<Vec<f64>> = best_d[..n - 1]
                .iter()
                .map(|&c| axis(c, h, REFINE_HALF_WIDTH))
                .collect();
            match grid_pass(&mut probe, &axes, Some((&best_d, best_score))) {
                Some((d, s)) if s > best_score => {
                    best_d = d;
                    best_score = s;
                }
                _ => break,
            }
        }
        round_traces.push(trace_of(sigma, &best_d));
    }

    Ok(OracleResult {
        best_trace: trace_of(sigma, &best_d),
        best_d,
        method: OracleMethod::GridRefine,
        meta: OracleMeta {
            final_resolution: Some(h),
            round_traces,
            iterations: probe.tests,
            converged: true,
            gap_bound: None,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentParams {
    /// Initial step fraction along the Newton direction, in `(0, 1]`.
    pub step: f64,
    /// Cap on Newton iterations across all barrier weights.
    pub max_iter: usize,
    /// Seeds the jittered interior starting point.
    pub seed: u64,
    /// Optional starting diagonal. When it is feasible and admits no
    /// improving step, the oracle returns it unchanged.
    pub init: Option<Vec<f64>>,
    /// Target duality-gap bound.
    pub gap_tol: f64,
}

impl Default for DescentParams {
    fn default() -> Self {
        Self {
            step: 1.0,
            max_iter: 2000,
            seed: 0,
            init: None,
            gap_tol: 1e-10,
        }
    }
}

/// `Σd + t·(ln det(Σx - D) + Σ ln d_i)`; `None` outside the open domain.
fn barrier(sigma: &StarCovariance, d: &[f64], t: f64) -> Option<f64> {
    if d.iter().any(|&x| x <= 0.0) {
        return None;
    }
    let s = linalg::minus_diagonal(&sigma.matrix, d);
    let chol = s.cholesky()?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    Some(d.iter().sum::<f64>() + t * (log_det + d.iter().map(|x| x.ln()).sum::<f64>()))
}

/// Newton ascent direction and squared decrement for the barrier objective.
fn newton_direction(sigma: &StarCovariance, d: &[f64], t: f64) -> Option<(DVector<f64>, f64)> {
    let n = d.len();
    let s = linalg::minus_diagonal(&sigma.matrix, d);
    let s_inv = s.cholesky()?.inverse();
    let grad = DVector::from_fn(n, |i, _| 1.0 - t * s_inv[(i, i)] + t / d[i]);
    // negated Hessian, positive definite on the domain
    let neg_hess = DMatrix::from_fn(n, n, |i, j| {
        t * s_inv[(i, j)] * s_inv[(i, j)] + if i == j { t / (d[i] * d[i]) } else { 0.0 }
    });
    let dir = neg_hess.cholesky()?.solve(&grad);
    let decrement = grad.dot(&dir);
    Some((dir, decrement))
}

/// Barrier ascent on `d`. Each step is clipped to `[0,1]ⁿ` and bisected
/// back toward the previous (feasible) iterate until it is strictly
/// feasible and increases the barrier objective. The barrier weight drops
/// tenfold whenever the Newton decrement is small, until the gap bound
/// `2n·t` is below `gap_tol`.
pub fn projected_descent_cmtfa(sigma: &StarCovariance, params: &DescentParams) -> Result<OracleResult> {
    let n = sigma.dim();
    if n > DESCENT_MAX_DIM {
        return Err(CmtfaError::Dimension(format!(
            "descent oracle supports n <= {DESCENT_MAX_DIM}, got {n}"
        )));
    }
    if !(params.step > 0.0 && params.step <= 1.0) {
        return Err(CmtfaError::InvalidParameter(format!(
            "step must lie in (0, 1], got {}",
            params.step
        )));
    }

    if let Some(init) = &params.init {
        check_len(sigma, init)?;
        if feasibility_check(sigma, init, FEASIBILITY_TOL)?.feasible {
            let probe = ascent_probe(sigma, init, 16, params.seed, 1e-12)?;
            if probe.improvement <= 1e-6 {
                return Ok(OracleResult {
                    best_trace: trace_of(sigma, init),
                    best_d: init.clone(),
                    method: OracleMethod::ProjectedDescent,
                    meta: OracleMeta {
                        final_resolution: None,
                        round_traces: Vec::new(),
                        iterations: 0,
                        converged: true,
                        gap_bound: None,
                    },
                });
            }
        }
    }

    let lambda0 = linalg::lambda_min(&sigma.matrix);
    let mut rng = rng::stream(params.seed, 0);
    let mut d: Vec<f64> = (0..n)
        .map(|_| lambda0 * (0.25 + 0.5 * rng.sample::<f64, _>(OpenOpen01)))
        .collect();
    let mut t = 1.0;
    let mut iterations = 0;
    let mut converged = false;

    'outer: loop {
        loop {
            if iterations >= params.max_iter {
                break 'outer;
            }
            let Some((dir, decrement)) = newton_direction(sigma, &d, t) else {
                break 'outer;
            };
            iterations += 1;
            if decrement / 2.0 <= 1e-12 {
                break;
            }
            let current = barrier(sigma, &d, t).expect("iterate is strictly feasible");
            let mut s = params.step;
            let mut moved = false;
            while s > 1e-16 {
                let candidate: Vec<f64> = d
                    .iter()
                    .zip(dir.iter())
                    .map(|(x, dx)| (x + s * dx).clamp(0.0, 1.0))
                    .collect();
                if let Some(value) = barrier(sigma, &candidate, t) {
                    if value >= current + 0.25 * s * decrement {
                        d = candidate;
                        moved = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if 2.0 * n as f64 * t <= params.gap_tol {
            converged = true;
            break;
        }
        t *= 0.1;
    }

    Ok(OracleResult {
        best_trace: trace_of(sigma, &d),
        best_d: d,
        method: OracleMethod::ProjectedDescent,
        meta: OracleMeta {
            final_resolution: None,
            round_traces: Vec::new(),
            iterations,
            converged,
            gap_bound: Some(2.0 * n as f64 * t),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    /// Largest increase of `Σ d_i` reached by a feasible step.
    pub improvement: f64,
    pub directions: usize,
}

/// From a feasible `d0`, walks along `1`, every `e_i`, and `random`
/// seeded non-negative directions as far as the box and `λ_min ≥ -tol`
/// allow (bisection), and reports the best gain in `Σ d_i`.
pub fn ascent_probe(
    sigma: &StarCovariance,
    d0: &[f64],
    random: usize,
    seed: u64,
    tol: f64,
) -> Result<ProbeReport> {
    check_len(sigma, d0)?;
    let n = d0.len();
    let feasible = |d: &[f64]| {
        d.iter().all(|&x| x >= -tol)
            && linalg::psd_within(&linalg::minus_diagonal(&sigma.matrix, d), tol)
    };
    if !feasible(d0) {
        return Err(CmtfaError::InvalidParameter(
            "probe start point is infeasible".into(),
        ));
    }
    let mut directions: Vec<Vec<f64>> = vec![vec![1.0; n]];
    directions.extend((0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()));
    let mut rng = rng::stream(seed, 1);
    directions.extend((0..random).map(|_| (0..n).map(|_| rng.sample::<f64, _>(OpenOpen01)).collect()));

    let mut improvement: f64 = 0.0;
    for g in &directions {
        let s_max = g
            .iter()
            .zip(d0)
            .filter(|(gi, _)| **gi > 0.0)
            .map(|(gi, di)| (1.0 - di).max(0.0) / gi)
            .fold(f64::INFINITY, f64::min);
        let point = |s: f64| -> Vec<f64> { d0.iter().zip(g).map(|(d, gi)| d + s * gi).collect() };
        let (mut lo, mut hi) = (0.0, s_max);
        if feasible(&point(hi)) {
            lo = hi;
        } else {
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if feasible(&point(mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        improvement = improvement.max(lo * g.iter().sum::<f64>());
    }
    Ok(ProbeReport {
        improvement,
        directions: directions.len(),
    })
}
