//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cmtfa::certificate::{
    build_beta, build_certificate, build_certificate_dominant, build_certificate_nondominant, verify_certificate,
};
use cmtfa::cli::sweep_rows;
use cmtfa::dominance::{classify_default, DominanceBranch};
use cmtfa::linalg::{max_abs, minus_diagonal, numerical_rank};
use cmtfa::model::build_star_covariance;
use cmtfa::oracle::{brute_force_cmtfa, projected_descent_cmtfa, DescentParams};
use cmtfa::rng;
use cmtfa::solver::{dominant_candidate, rank1_candidate, solve, solve_rank_n_minus_1, trace_advantage};
use cmtfa::treesim::{
    check_tree_feasibility, density_sum_check, mc_prob_nondominant, prob_no_dominant_element, prob_nondominant,
    ClusterSpec,
};
use cmtfa::{EdgeWeightVector, FactorDecomposition, SolutionBranch};
use common::{random_alpha, random_dim};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn alpha(v: &[f64]) -> EdgeWeightVector {
    EdgeWeightVector::new(v.to_vec()).unwrap()
}

fn dichotomy() -> Outcome {
    let mut bad = Vec::new();
    let (mut low, mut high) = (0, 0);
    for k in 0..500 {
        let n = random_dim(101, k, 3, 8);
        let a = random_alpha(101, k, n);
        let decomp = solve(&a);
        let rank = decomp.rank();
        let expected = match decomp.branch {
            SolutionBranch::RankNMinus1 => n - 1,
            _ => 1,
        };
        if rank == 1 {
            low += 1;
        } else {
            high += 1;
        }
        if rank != expected {
            bad.push(format!("{:?} rank {rank}", a.as_slice()));
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!("500 draws: {low} rank 1, {high} rank n-1, {} mismatches {:?}", bad.len(), bad.first()),
    )
}

fn oracle_agreement() -> Outcome {
    let (mut worst_grid, mut worst_descent) = (0.0f64, 0.0f64);
    for k in 0..100 {
        let n = random_dim(202, k, 3, 4);
        let a = random_alpha(202, k, n);
        let sigma = build_star_covariance(&a);
        let closed = solve(&a).trace_sigma_t;
        let grid = brute_force_cmtfa(&sigma, 0.05, 3).unwrap();
        let descent = projected_descent_cmtfa(&sigma, &DescentParams { seed: k, ..DescentParams::default() }).unwrap();
        worst_grid = worst_grid.max((grid.best_trace - closed).abs());
        worst_descent = worst_descent.max((descent.best_trace - closed).abs());
    }
    Outcome::new(
        worst_grid <= 1e-3 && worst_descent <= 1e-4,
        format!("max |grid - closed| = {worst_grid:.2e} (<= 1e-3), max |descent - closed| = {worst_descent:.2e} (<= 1e-4)"),
    )
}

fn tampered(sigma: &cmtfa::StarCovariance, decomp: &FactorDecomposition, i: usize, delta: f64) -> FactorDecomposition {
    let mut d = decomp.d.clone();
    d[i] += delta;
    FactorDecomposition {
        sigma_t: minus_diagonal(&sigma.matrix, &d),
        trace_sigma_t: sigma.matrix.trace() - d.iter().sum::<f64>(),
        d,
        branch: decomp.branch,
    }
}

fn certificate_suite() -> Outcome {
    let mut failures = 0;
    let mut undetected = 0;
    let mut worst = 0.0f64;
    for k in 0..500 {
        let n = random_dim(303, k, 3, 8);
        let a = random_alpha(303, k, n);
        let sigma = build_star_covariance(&a);
        let decomp = solve(&a);
        let cert = build_certificate(&a).unwrap();
        let report = verify_certificate(&sigma, &decomp, &cert, 1e-8).unwrap();
        let core = report.d_nonneg && report.lambda_min_zero && report.null_space && report.row_norms;
        if !(core && report.pass) {
            failures += 1;
        }
        let r = &report.residuals;
        worst = worst.max(r.lambda_min.abs()).max(r.null_space).max(r.row_norms);

        let mut rng = rng::stream(304, k);
        let i = rng.random_range(0..n);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let bad = tampered(&sigma, &decomp, i, sign * 0.05);
        let report = verify_certificate(&sigma, &bad, &cert, 1e-8).unwrap();
        let core = report.d_nonneg && report.lambda_min_zero && report.null_space && report.row_norms;
        if core || report.pass {
            undetected += 1;
        }
    }
    Outcome::new(
        failures == 0 && undetected == 0,
        format!("500 draws: {failures} failed at tol 1e-8 (worst residual {worst:.1e}); {undetected} of 500 tampered d_i +/- 0.05 passed"),
    )
}

fn worked_example() -> Outcome {
    let a = alpha(&[0.9, 0.2, 0.1]);
    let sigma = build_star_covariance(&a);
    let decomp = solve_rank_n_minus_1(&a).unwrap();
    let diag: Vec<f64> = decomp.sigma_t.diagonal().iter().copied().collect();
    let diag_ok = diag.iter().zip([0.27, 0.16, 0.07]).all(|(x, y)| (x - y).abs() <= 1e-12);
    let trace_ok = (decomp.trace_sigma_t - 0.5).abs() <= 1e-12;
    let advantage = trace_advantage(&a).unwrap();
    let advantage_ok = (advantage - 0.36).abs() <= 1e-12;
    let cert = build_certificate_dominant(&a).unwrap();
    let phi: Vec<f64> = cert.witness.column(0).iter().copied().collect();
    let phi_ok = phi == [1.0, -1.0, -1.0];
    let residual = max_abs(&(minus_diagonal(&sigma.matrix, &decomp.d) * &cert.witness));
    let grid = brute_force_cmtfa(&sigma, 0.05, 3).unwrap().best_trace;
    let descent = projected_descent_cmtfa(&sigma, &DescentParams::default()).unwrap().best_trace;
    let oracles_ok = (grid - 0.5).abs() <= 1e-3 && (descent - 0.5).abs() <= 1e-4;
    Outcome::new(
        diag_ok && trace_ok && advantage_ok && phi_ok && residual <= 1e-10 && oracles_ok,
        format!(
            "diag {diag:.4?}, trace {:.6}, advantage {advantage:.6}, phi {phi:?}, residual {residual:.1e}, grid {grid:.6}, descent {descent:.8}",
            decomp.trace_sigma_t
        ),
    )
}

fn boundary_collapse() -> Outcome {
    let a = alpha(&[0.7, 0.4, 0.3]);
    let verdict = classify_default(&a);
    let beta_nn = build_beta(&a).unwrap().beta_nn();
    let gap = max_abs(&(rank1_candidate(&a) - dominant_candidate(&a)));
    let nd_rank = build_certificate_nondominant(&a).unwrap().witness_rank();
    let dm_rank = build_certificate_dominant(&a).unwrap().witness_rank();
    let decomp_rank = numerical_rank(&solve(&a).sigma_t);
    Outcome::new(
        verdict.branch == DominanceBranch::Boundary && beta_nn == 1.0 && gap <= 1e-12 && nd_rank == 1 && dm_rank == 1,
        format!(
            "verdict {}, beta_nn {beta_nn}, max |ND - DM| = {gap:.1e}, witness ranks {nd_rank}/{dm_rank}, solution rank {decomp_rank}",
            verdict.branch
        ),
    )
}

fn probability_law() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in 2..=5usize {
        let est = mc_prob_nondominant(n, 100_000, 2024).unwrap();
        let stated = prob_nondominant(n as u64).unwrap();
        let corrected = prob_no_dominant_element(n as u64).unwrap();
        let ok = (est.estimate - stated).abs() <= 0.01;
        pass &= ok;
        parts.push(format!(
            "n={n}: mc {:.4} vs 1-1/n! {:.4} {} (1-1/(n-1)! = {:.4})",
            est.estimate,
            stated,
            if ok { "ok" } else { "MISS" },
            corrected
        ));
    }
    for n in [3usize, 4] {
        let c = density_sum_check(n, 100_000, 2024).unwrap();
        let ok = c.max_deviation < 0.01;
        pass &= ok;
        parts.push(format!("density n={n}: KS {:.4} {}", c.max_deviation, if ok { "ok" } else { "MISS" }));
    }
    Outcome::new(pass, parts.join("; "))
}

fn implication_chain() -> Outcome {
    let mut violations = 0;
    for k in 0..200 {
        let mut rng = rng::stream(707, k);
        let m = rng.random_range(1..=5);
        let sizes: Vec<u64> = (0..m).map(|_| rng.random_range(2..=8)).collect();
        let delta = rng.random_range(0.5..0.99);
        let r = check_tree_feasibility(&ClusterSpec::new(sizes, delta).unwrap(), None, 0).unwrap();
        if (r.sufficient_holds && !r.meets_delta) || (r.meets_delta && !r.necessary_holds) {
            violations += 1;
        }
    }
    let worked = [
        (vec![4, 4], 0.9, (true, true, true)),
        (vec![3, 3], 0.9, (false, false, false)),
        (vec![3], 0.8, (true, true, true)),
    ];
    let worked_ok = worked.iter().all(|(sizes, delta, (nc, sc, meets))| {
        let r = check_tree_feasibility(&ClusterSpec::new(sizes.clone(), *delta).unwrap(), None, 0).unwrap();
        r.necessary_holds == *nc && r.sufficient_holds == *sc && r.meets_delta == *meets
    });
    Outcome::new(
        violations == 0 && worked_ok,
        format!("200 random specs: {violations} violations; worked specs {}", if worked_ok { "match" } else { "MISMATCH" }),
    )
}

fn sweep_reproduction() -> Outcome {
    let rows = sweep_rows(&[0.2, 0.1], 0.3, 0.95, 0.05).unwrap();
    let bound = 1.0 - 2.0 * 0.3 + 0.3 * 0.3;
    let increasing = rows.windows(2).all(|w| w[1].advantage > w[0].advantage);
    let starts_at_zero = rows.first().is_some_and(|r| r.branch == DominanceBranch::Boundary && r.advantage.abs() <= 1e-12);
    let bounded = rows.iter().all(|r| r.advantage < bound);
    let last = rows.last().map(|r| r.advantage).unwrap_or(f64::NAN);
    Outcome::new(
        rows.len() == 14 && increasing && starts_at_zero && bounded,
        format!(
            "{} rows, first advantage {:.1e}, last {last:.4} < bound {bound:.2}, strictly increasing: {increasing}",
            rows.len(),
            rows.first().map(|r| r.advantage).unwrap_or(f64::NAN)
        ),
    )
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Option<Duration>, Check); 8] = [
        ("1 dichotomy: rank exactly 1 or n-1", Some(Duration::from_secs(10)), dichotomy),
        ("2 oracle agreement", Some(Duration::from_secs(120)), oracle_agreement),
        ("3 certificate suite", None, certificate_suite),
        ("4 worked example (0.9, 0.2, 0.1)", None, worked_example),
        ("5 boundary collapse (0.7, 0.4, 0.3)", None, boundary_collapse),
        ("6 probability law", Some(Duration::from_secs(30)), probability_law),
        ("7 tree implication chain", None, implication_chain),
        ("8 trace advantage sweep", None, sweep_reproduction),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = limit.map(|l| format!(" / {}s", l.as_secs())).unwrap_or_default();
        println!(
            "[{}] {name} ({:.2}s{budget}): {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
