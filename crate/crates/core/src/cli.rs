//! `cmtfa` command-line interface.
//!
//! Exit codes: 0 success, 1 internal inconsistency or I/O failure,
//! 2 invalid input, 3 certificate verification failed (report still
//! written).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::certificate::{build_certificate, verify_certificate, OptimalityCertificate, VerificationReport};
use crate::dominance::{classify_default, DominanceBranch, DominanceVerdict};
use crate::error::CmtfaError;
use crate::format::{g17, to_json_line};
use crate::model::{build_star_covariance, sample_star_model, EdgeWeightVector};
use crate::oracle::{brute_force_cmtfa, projected_descent_cmtfa, DescentParams, OracleResult};
use crate::solver::{candidate_traces, solve, trace_advantage};
use crate::treesim::{
    check_tree_feasibility, density_sum_check, mc_prob_nondominant, prob_no_dominant_element, prob_nondominant,
    ClusterSpec, DensityCheck,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

/// Reconstruction tolerance for `solve`.
const RECONSTRUCTION_TOL: f64 = 1e-12;
const GRID_MAX_DIM: usize = 5;

#[derive(Debug, Parser)]
#[command(name = "cmtfa", version, about = "Closed-form minimum trace factor analysis for latent stars")]
pub struct Cli {
    /// Seed for every random draw
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Verification tolerance
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,

    /// Write to this file instead of standard output
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct AlphaInput {
    /// Comma-separated edge weights, e.g. 0.9,0.2,0.1
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "input")]
    pub alpha: Option<Vec<f64>>,

    /// JSON file of the form {"alpha": [...]}
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleChoice {
    /// Grid for n <= 5 plus descent
    Auto,
    Grid,
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimulationMode {
    Nondominance,
    Density,
    StarSamples,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form CMTFA decomposition
    Solve(AlphaInput),
    /// Build and verify the optimality certificate
    Certify(AlphaInput),
    /// Solve numerically without the closed forms
    Oracle {
        #[command(flatten)]
        alpha: AlphaInput,
        #[arg(long, value_enum, default_value_t = OracleChoice::Auto)]
        method: OracleChoice,
        #[arg(long, default_value_t = 0.05)]
        resolution: f64,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        #[arg(long, default_value_t = 2000)]
        max_iter: usize,
    },
    /// Monte Carlo studies of random stars
    Simulate {
        #[arg(long, value_enum)]
        mode: SimulationMode,
        /// Star size (nondominance, density)
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        /// Rows to draw (star-samples)
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[command(flatten)]
        alpha: AlphaInput,
    },
    /// Tree feasibility conditions for a set of clusters
    TreeCheck {
        /// Comma-separated cluster sizes
        #[arg(long, value_delimiter = ',', conflicts_with = "input")]
        sizes: Option<Vec<u64>>,
        #[arg(long, requires = "sizes")]
        delta: Option<f64>,
        /// JSON file of the form {"sizes": [...], "delta": ...}
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also estimate the joint probability by simulation
        #[arg(long)]
        mc_trials: Option<u64>,
    },
    /// Trace advantage of the rank n-1 solution over a range of leads
    Sweep {
        /// Comma-separated tail magnitudes
        #[arg(long, value_delimiter = ',', required = true)]
        tail: Vec<f64>,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        step: f64,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<CmtfaError> for CliError {
    fn from(e: CmtfaError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

/// Output text plus the exit code it should be reported with.
struct Rendered {
    text: String,
    code: i32,
    note: Option<String>,
}

impl Rendered {
    fn ok(text: String) -> Self {
        Self {
            text,
            code: EXIT_OK,
            note: None,
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing results to `out` (or `--output`) and diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli) {
        Ok(rendered) => {
            if let Some(note) = &rendered.note {
                let _ = writeln!(err, "{note}");
            }
            if let Err(e) = emit(&cli, &rendered.text, out) {
                let _ = writeln!(err, "error: {e}");
                return EXIT_INTERNAL;
            }
            rendered.code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                CliError::Invalid(_) => EXIT_INVALID,
                CliError::Internal(_) => EXIT_INTERNAL,
            }
        }
    }
}

fn emit(cli: &Cli, text: &str, out: &mut dyn Write) -> std::io::Result<()> {
    match &cli.output {
        Some(path) => fs::write(path, text),
        None => {
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

fn execute(cli: &Cli) -> Result<Rendered, CliError> {
    if !(cli.tol >= 0.0 && cli.tol.is_finite()) {
        return Err(CliError::Invalid(format!("--tol must be a finite non-negative number, got {}", cli.tol)));
    }
    match &cli.command {
        Command::Solve(input) => cmd_solve(cli, &read_alpha(input)?),
        Command::Certify(input) => cmd_certify(cli, &read_alpha(input)?),
        Command::Oracle {
            alpha,
            method,
            resolution,
            rounds,
            max_iter,
        } => cmd_oracle(cli, &read_alpha(alpha)?, *method, *resolution, *rounds, *max_iter),
        Command::Simulate {
            mode,
            n,
            trials,
            samples,
            alpha,
        } => cmd_simulate(cli, *mode, *n, *trials, *samples, alpha),
        Command::TreeCheck {
            sizes,
            delta,
            input,
            mc_trials,
        } => {
            let spec = match (sizes, input) {
                (Some(sizes), None) => {
                    let delta = delta.ok_or_else(|| CliError::Invalid("--delta is required with --sizes".into()))?;
                    ClusterSpec::new(sizes.clone(), delta)?
                }
                (None, Some(path)) => parse_json_file(path)?,
                _ => return Err(CliError::Invalid("give either --sizes/--delta or --input".into())),
            };
            cmd_tree_check(cli, &spec, *mc_trials)
        }
        Command::Sweep { tail, from, to, step } => cmd_sweep(cli, tail, *from, *to, *step),
    }
}

fn parse_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn read_alpha(input: &AlphaInput) -> Result<EdgeWeightVector, CliError> {
    match (&input.alpha, &input.input) {
        (Some(values), None) => Ok(EdgeWeightVector::new(values.clone())?),
        (None, Some(path)) => parse_json_file(path),
        _ => Err(CliError::Invalid("give either --alpha or --input".into())),
    }
}

fn csv_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV output is UTF-8")
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

fn cmd_solve(cli: &Cli, alpha: &EdgeWeightVector) -> Result<Rendered, CliError> {
    let sigma = build_star_covariance(alpha);
    let decomp = solve(alpha);
    let error = decomp.reconstruction_error(&sigma);
    if error.is_nan() || error > RECONSTRUCTION_TOL {
        return Err(CliError::Internal(format!(
            "reconstruction error {} exceeds {}",
            g17(error),
            g17(RECONSTRUCTION_TOL)
        )));
    }
    let text = match cli.format {
        OutputFormat::Json => to_json_line(&decomp),
        OutputFormat::Csv => {
            let n = decomp.dim();
            let head: Vec<String> = std::iter::once("row".to_string()).chain(numbered("c", n)).collect();
            let mut rows: Vec<Vec<String>> = decomp
                .sigma_t
                .row_iter()
                .enumerate()
                .map(|(i, row)| {
                    std::iter::once(format!("sigma_t{}", i + 1))
                        .chain(row.iter().map(|&v| g17(v)))
                        .collect()
                })
                .collect();
            rows.push(std::iter::once("d".to_string()).chain(decomp.d.iter().map(|&v| g17(v))).collect());
            csv_table(&head, &rows)
        }
    };
    Ok(Rendered::ok(text))
}

#[derive(Serialize)]
struct CertifyOutput<'a> {
    verdict: DominanceVerdict,
    certificate: &'a OptimalityCertificate,
    report: &'a VerificationReport,
    tol: f64,
    note: Option<String>,
}

fn cmd_certify(cli: &Cli, alpha: &EdgeWeightVector) -> Result<Rendered, CliError> {
    let sigma = build_star_covariance(alpha);
    let verdict = classify_default(alpha);
    let decomp = solve(alpha);
    let cert = build_certificate(alpha)?;
    let report = verify_certificate(&sigma, &decomp, &cert, cli.tol)?;
    let note = (verdict.branch == DominanceBranch::Boundary)
        .then(|| format!("boundary: witness rank {}", cert.witness_rank()));
    let text = match cli.format {
        OutputFormat::Json => to_json_line(&CertifyOutput {
            verdict,
            certificate: &cert,
            report: &report,
            tol: cli.tol,
            note: note.clone(),
        }),
        OutputFormat::Csv => {
            let r = &report.residuals;
            let rows = [
                ("d_nonneg", report.d_nonneg, r.min_d),
                ("lambda_min_zero", report.lambda_min_zero, r.lambda_min),
                ("null_space", report.null_space, r.null_space),
                ("row_norms", report.row_norms, r.row_norms),
                ("reconstruction", report.reconstruction, r.reconstruction),
            ]
            .iter()
            .map(|(name, ok, value)| vec![name.to_string(), ok.to_string(), g17(*value)])
            .chain(std::iter::once(vec!["overall".into(), report.pass.to_string(), String::new()]))
            .collect::<Vec<_>>();
            csv_table(&header(&["condition", "pass", "residual"]), &rows)
        }
    };
    Ok(Rendered {
        text,
        code: if report.pass { EXIT_OK } else { EXIT_VERIFICATION },
        note,
    })
}

#[derive(Serialize)]
struct OracleOutput {
    closed_form_trace: f64,
    grid: Option<OracleResult>,
    descent: Option<OracleResult>,
}

fn cmd_oracle(
    cli: &Cli,
    alpha: &EdgeWeightVector,
    method: OracleChoice,
    resolution: f64,
    rounds: usize,
    max_iter: usize,
) -> Result<Rendered, CliError> {
    let sigma = build_star_covariance(alpha);
    let n = alpha.len();
    let run_grid = match method {
        OracleChoice::Auto => n <= GRID_MAX_DIM,
        OracleChoice::Grid => true,
        OracleChoice::Descent => false,
    };
    let grid = if run_grid {
        Some(brute_force_cmtfa(&sigma, resolution, rounds)?)
    } else {
        None
    };
    let descent = if method != OracleChoice::Grid {
        let params = DescentParams {
            max_iter,
            seed: cli.seed,
            ..DescentParams::default()
        };
        Some(projected_descent_cmtfa(&sigma, &params)?)
    } else {
        None
    };
    let output = OracleOutput {
        closed_form_trace: solve(alpha).trace_sigma_t,
        grid,
        descent,
    };
    let text = match cli.format {
        OutputFormat::Json => to_json_line(&output),
        OutputFormat::Csv => {
            let head: Vec<String> = header(&["method", "best_trace", "closed_form_trace"])
                .into_iter()
                .chain(numbered("d", n))
                .collect();
            let rows: Vec<Vec<String>> = [("grid", &output.grid), ("descent", &output.descent)]
                .into_iter()
                .filter_map(|(name, r)| r.as_ref().map(|r| (name, r)))
                .map(|(name, r)| {
                    [name.to_string(), g17(r.best_trace), g17(output.closed_form_trace)]
                        .into_iter()
                        .chain(r.best_d.iter().map(|&v| g17(v)))
                        .collect()
                })
                .collect();
            csv_table(&head, &rows)
        }
    };
    Ok(Rendered::ok(text))
}

#[derive(Serialize)]
struct NondominanceOutput {
    n: usize,
    trials: u64,
    seed: u64,
    estimate: f64,
    half_width: f64,
    designated_lead_probability: f64,
    no_dominant_element_probability: f64,
}

#[derive(Serialize)]
struct DensityOutput {
    n: usize,
    trials: u64,
    seed: u64,
    #[serde(flatten)]
    check: DensityCheck,
}

#[derive(Serialize)]
struct SamplesOutput {
    seed: u64,
    observations: Vec<Vec<f64>>,
}

/// Single-record CSV: field names as the header row.
fn one_row_csv(fields: &[(&str, String)]) -> String {
    let head: Vec<String> = fields.iter().map(|(k, _)| k.to_string()).collect();
    let row: Vec<String> = fields.iter().map(|(_, v)| v.clone()).collect();
    csv_table(&head, &[row])
}

fn opt_g17(x: Option<f64>) -> String {
    x.map(g17).unwrap_or_default()
}

fn cmd_simulate(
    cli: &Cli,
    mode: SimulationMode,
    n: Option<usize>,
    trials: u64,
    samples: usize,
    alpha: &AlphaInput,
) -> Result<Rendered, CliError> {
    let need_n = || n.ok_or_else(|| CliError::Invalid("--n is required for this mode".into()));
    let text = match mode {
        SimulationMode::Nondominance => {
            let n = need_n()?;
            let est = mc_prob_nondominant(n, trials, cli.seed)?;
            let output = NondominanceOutput {
                n,
                trials,
                seed: cli.seed,
                estimate: est.estimate,
                half_width: est.half_width,
                designated_lead_probability: prob_nondominant(n as u64)?,
                no_dominant_element_probability: prob_no_dominant_element(n as u64)?,
            };
            match cli.format {
                OutputFormat::Json => to_json_line(&output),
                OutputFormat::Csv => one_row_csv(&[
                    ("n", n.to_string()),
                    ("trials", trials.to_string()),
                    ("seed", cli.seed.to_string()),
                    ("estimate", g17(output.estimate)),
                    ("half_width", g17(output.half_width)),
                    ("designated_lead_probability", g17(output.designated_lead_probability)),
                    ("no_dominant_element_probability", g17(output.no_dominant_element_probability)),
                ]),
            }
        }
        SimulationMode::Density => {
            let n = need_n()?;
            let output = DensityOutput {
                n,
                trials,
                seed: cli.seed,
                check: density_sum_check(n, trials, cli.seed)?,
            };
            match cli.format {
                OutputFormat::Json => to_json_line(&output),
                OutputFormat::Csv => {
                    let c = &output.check;
                    one_row_csv(&[
                        ("n", n.to_string()),
                        ("trials", trials.to_string()),
                        ("seed", cli.seed.to_string()),
                        ("max_deviation", g17(c.max_deviation)),
                        ("accepted", c.accepted.to_string()),
                        ("empirical_mass", g17(c.empirical_mass)),
                        ("expected_mass", g17(c.expected_mass)),
                    ])
                }
            }
        }
        SimulationMode::StarSamples => {
            let alpha = read_alpha(alpha)?;
            let batch = sample_star_model(&alpha, samples, cli.seed)?;
            match cli.format {
                OutputFormat::Json => to_json_line(&SamplesOutput {
                    seed: cli.seed,
                    observations: crate::linalg::to_rows(&batch.observations),
                }),
                OutputFormat::Csv => {
                    let mut buf = Vec::new();
                    batch
                        .write_csv(&mut buf)
                        .map_err(|e| CliError::Internal(e.to_string()))?;
                    String::from_utf8(buf).expect("CSV output is UTF-8")
                }
            }
        }
    };
    Ok(Rendered::ok(text))
}

fn cmd_tree_check(cli: &Cli, spec: &ClusterSpec, mc_trials: Option<u64>) -> Result<Rendered, CliError> {
    let report = check_tree_feasibility(spec, mc_trials, cli.seed)?;
    let text = match cli.format {
        OutputFormat::Json => to_json_line(&report),
        OutputFormat::Csv => one_row_csv(&[
            ("m", spec.clusters().to_string()),
            ("delta", g17(spec.delta())),
            ("necessary_holds", report.necessary_holds.to_string()),
            ("sufficient_holds", report.sufficient_holds.to_string()),
            ("exact_joint_probability", g17(report.exact_joint_probability)),
            ("meets_delta", report.meets_delta.to_string()),
            ("threshold", g17(report.threshold)),
            ("mc_estimate", opt_g17(report.mc_estimate.map(|e| e.estimate))),
            ("mc_half_width", opt_g17(report.mc_estimate.map(|e| e.half_width))),
        ]),
    };
    Ok(Rendered::ok(text))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha1: f64,
    pub trace_nd: f64,
    pub trace_dm: f64,
    pub advantage: f64,
    pub branch: DominanceBranch,
}

/// Rows for every lead `from + k·step ≤ to` at which the lead dominates
/// `tail` or sits on the boundary.
pub fn sweep_rows(tail: &[f64], from: f64, to: f64, step: f64) -> Result<Vec<SweepRow>, CmtfaError> {
    if step.is_nan() || step <= 0.0 || !from.is_finite() || !to.is_finite() {
        return Err(CmtfaError::InvalidParameter(format!(
            "need finite --from/--to and --step > 0, got {from}, {to}, {step}"
        )));
    }
    if tail.is_empty() {
        return Err(CmtfaError::TooFewWeights(1));
    }
    // validate the tail on its own so errors name tail entries
    let tail_check: Vec<f64> = std::iter::once(0.5).chain(tail.iter().copied()).collect();
    EdgeWeightVector::new(tail_check).map_err(|e| match e {
        CmtfaError::DomainViolation { index, value } => CmtfaError::DomainViolation { index: index - 1, value },
        other => other,
    })?;
    let mut rows = Vec::new();
    let mut k = 0u64;
    loop {
        let lead = from + k as f64 * step;
        if lead > to + 1e-12 * step.max(1.0) {
            break;
        }
        k += 1;
        let entries: Vec<f64> = std::iter::once(lead).chain(tail.iter().copied()).collect();
        let Ok(alpha) = EdgeWeightVector::new(entries) else {
            continue;
        };
        let verdict = classify_default(&alpha);
        if verdict.branch == DominanceBranch::NonDominant || verdict.dominant_index != Some(0) {
            continue;
        }
        let (trace_nd, trace_dm) = candidate_traces(&alpha);
        rows.push(SweepRow {
            alpha1: lead,
            trace_nd,
            trace_dm,
            advantage: trace_advantage(&alpha)?,
            branch: verdict.branch,
        });
    }
    Ok(rows)
}

fn cmd_sweep(cli: &Cli, tail: &[f64], from: f64, to: f64, step: f64) -> Result<Rendered, CliError> {
    let rows = sweep_rows(tail, from, to, step)?;
    if rows.is_empty() {
        return Err(CliError::Invalid("the range contains no dominant lead".into()));
    }
    let text = match cli.format {
        OutputFormat::Json => to_json_line(&rows),
        OutputFormat::Csv => {
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![g17(r.alpha1), g17(r.trace_nd), g17(r.trace_dm), g17(r.advantage)])
                .collect();
            csv_table(&header(&["alpha1", "trace_nd", "trace_dm", "advantage"]), &body)
        }
    };
    Ok(Rendered::ok(text))
}
