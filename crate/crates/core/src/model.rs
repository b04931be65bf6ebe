//! Domain types for the latent star: edge weights, the population
//! covariance, factor decompositions and samples from the generative model.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CmtfaError, Result};
use crate::format::g17;
use crate::linalg;
use crate::rng;

/// Edge weights `α` of a latent star, in the caller's order.
///
/// Every entry satisfies `0 < |α_i| < 1` and there are at least two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlphaRepr", into = "AlphaRepr")]
pub struct EdgeWeightVector {
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AlphaRepr {
    alpha: Vec<f64>,
}

impl TryFrom<AlphaRepr> for EdgeWeightVector {
    type Error = CmtfaError;

    fn try_from(repr: AlphaRepr) -> Result<Self> {
        EdgeWeightVector::new(repr.alpha)
    }
}

impl From<EdgeWeightVector> for AlphaRepr {
    fn from(alpha: EdgeWeightVector) -> Self {
        AlphaRepr {
            alpha: alpha.entries,
        }
    }
}

impl EdgeWeightVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(CmtfaError::TooFewWeights(entries.len()));
        }
        // NaN fails both comparisons.
        if let Some((index, &value)) = entries
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.abs() > 0.0 && a.abs() < 1.0))
        {
            return Err(CmtfaError::DomainViolation { index, value });
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.entries.iter().map(|a| a.abs()).collect()
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.entries)
    }
}

/// Magnitude-sorted view of an edge-weight vector.
///
/// `permutation[k]` is the original (0-based) index of the entry occupying
/// sorted slot `k`; `magnitudes` is non-increasing. Ties keep the lower
/// original index first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortProfile {
    pub permutation: Vec<usize>,
    pub magnitudes: Vec<f64>,
}

impl SortProfile {
    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    /// Original index of the largest-magnitude entry.
    pub fn lead(&self) -> usize {
        self.permutation[0]
    }

    /// Entries of `values` (original order) rearranged into sorted order.
    pub fn to_sorted(&self, values: &[f64]) -> Vec<f64> {
        self.permutation.iter().map(|&i| values[i]).collect()
    }

    /// Inverse of [`SortProfile::to_sorted`].
    pub fn to_original(&self, sorted: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; sorted.len()];
        for (slot, &orig) in self.permutation.iter().enumerate() {
            out[orig] = sorted[slot];
        }
        out
    }

    /// Moves the rows of a sorted-view matrix back to original order.
    pub fn rows_to_original(&self, sorted: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(sorted.nrows(), sorted.ncols());
        for (slot, &orig) in self.permutation.iter().enumerate() {
            out.set_row(orig, &sorted.row(slot));
        }
        out
    }
}

pub fn sort_profile(alpha: &EdgeWeightVector) -> SortProfile {
    let mags = alpha.magnitudes();
    let mut permutation: Vec<usize> = (0..mags.len()).collect();
    // stable: equal magnitudes keep ascending original index
    permutation.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]));
    let magnitudes = permutation.iter().map(|&i| mags[i]).collect();
    SortProfile {
        permutation,
        magnitudes,
    }
}

/// Population covariance of the star: unit diagonal, `α_i α_j` elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct StarCovariance {
    pub matrix: DMatrix<f64>,
}

impl StarCovariance {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn build_star_covariance(alpha: &EdgeWeightVector) -> StarCovariance {
    let a = alpha.as_slice();
    let n = a.len();
    let matrix = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { a[i] * a[j] });
    StarCovariance { matrix }
}

/// Which closed form produced a decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionBranch {
    Rank1,
    RankNMinus1,
    Boundary,
}

/// `Σx = Σt + diag(d)` with `Σt` PSD and `d ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DecompositionRepr", into = "DecompositionRepr")]
pub struct FactorDecomposition {
    pub sigma_t: DMatrix<f64>,
    pub d: Vec<f64>,
    pub branch: SolutionBranch,
    pub trace_sigma_t: f64,
}

#[derive(Serialize, Deserialize)]
struct DecompositionRepr {
    sigma_t: Vec<Vec<f64>>,
    d: Vec<f64>,
    branch: SolutionBranch,
    trace: f64,
}

impl TryFrom<DecompositionRepr> for FactorDecomposition {
    type Error = CmtfaError;

    fn try_from(r: DecompositionRepr) -> Result<Self> {
        let n = r.d.len();
        if r.sigma_t.len() != n || r.sigma_t.iter().any(|row| row.len() != n) {
            return Err(CmtfaError::ShapeMismatch(format!(
                "sigma_t must be {n}x{n} to match d"
            )));
        }
        let flat: Vec<f64> = r.sigma_t.into_iter().flatten().collect();
        Ok(Self {
            sigma_t: DMatrix::from_row_slice(n, n, &flat),
            d: r.d,
            branch: r.branch,
            trace_sigma_t: r.trace,
        })
    }
}

impl From<FactorDecomposition> for DecompositionRepr {
    fn from(f: FactorDecomposition) -> Self {
        DecompositionRepr {
            sigma_t: linalg::to_rows(&f.sigma_t),
            d: f.d,
            branch: f.branch,
            trace: f.trace_sigma_t,
        }
    }
}

impl FactorDecomposition {
    /// Builds the decomposition from `Σt`, taking `d = 1 - diag(Σt)` (the
    /// star covariance has unit diagonal).
    pub(crate) fn from_sigma_t(sigma_t: DMatrix<f64>, branch: SolutionBranch) -> Self {
        let d = sigma_t.diagonal().iter().map(|s| 1.0 - s).collect();
        let trace_sigma_t = sigma_t.trace();
        Self {
            sigma_t,
            d,
            branch,
            trace_sigma_t,
        }
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// `Σt + diag(d)`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut m = self.sigma_t.clone();
        for (i, di) in self.d.iter().enumerate() {
            m[(i, i)] += di;
        }
        m
    }

    /// Largest entrywise deviation of `Σt + diag(d)` from `sigma`.
    pub fn reconstruction_error(&self, sigma: &StarCovariance) -> f64 {
        linalg::max_abs(&(self.reconstruct() - &sigma.matrix))
    }

    pub fn rank(&self) -> usize {
        linalg::numerical_rank(&self.sigma_t)
    }
}

/// Draws from `X = αY + Z`, one observation per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub observations: DMatrix<f64>,
    pub seed: u64,
}

impl SampleBatch {
    pub fn empirical_covariance(&self) -> DMatrix<f64> {
        let s = self.observations.nrows() as f64;
        let mean = self.observations.row_mean();
        let mut centered = self.observations.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        centered.transpose() * &centered / s
    }

    /// CSV with header `X1..Xn`, one observation per line.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let n = self.observations.ncols();
        w.write_record((1..=n).map(|i| format!("X{i}")))?;
        for row in self.observations.row_iter() {
            w.write_record(row.iter().map(|&v| g17(v)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples `s` rows of the star model. Row `k` uses random stream `k` of
/// `seed`, so the batch does not depend on thread scheduling.
pub fn sample_star_model(alpha: &EdgeWeightVector, s: usize, seed: u64) -> Result<SampleBatch> {
    if s == 0 {
        return Err(CmtfaError::InvalidParameter("sample count must be at least 1".into()));
    }
    let a = alpha.as_slice();
    let noise_sd: Vec<f64> = a.iter().map(|ai| (1.0 - ai * ai).sqrt()).collect();
    let rows: Vec<Vec<f64>> = (0..s as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k);
            let y: f64 = rng.sample(StandardNormal);
            a.iter()
                .zip(&noise_sd)
                .map(|(ai, sd)| {
                    let z: f64 = rng.sample(StandardNormal);
                    ai * y + sd * z
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(SampleBatch {
        observations: DMatrix::from_row_slice(s, a.len(), &flat),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alpha(v: &[f64]) -> EdgeWeightVector {
        EdgeWeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn two_leaf_symmetric_covariance() {
        let s = build_star_covariance(&alpha(&[0.5, 0.5]));
        assert_eq!(s.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 1.0]));
    }

    #[test]
    fn three_leaf_covariance_entries() {
        let s = build_star_covariance(&alpha(&[0.9, 0.2, 0.1])).matrix;
        for i in 0..3 {
            assert_eq!(s[(i, i)], 1.0);
        }
        assert!((s[(0, 1)] - 0.18).abs() < 1e-15);
        assert!((s[(0, 2)] - 0.09).abs() < 1e-15);
        assert!((s[(1, 2)] - 0.02).abs() < 1e-15);
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn rejects_out_of_domain_weights() {
        assert_eq!(
            EdgeWeightVector::new(vec![0.5, 1.0]),
            Err(CmtfaError::DomainViolation { index: 1, value: 1.0 })
        );
        assert!(matches!(
            EdgeWeightVector::new(vec![0.0, 0.3]),
            Err(CmtfaError::DomainViolation { index: 0, .. })
        ));
        assert!(matches!(
            EdgeWeightVector::new(vec![0.3, -1.2]),
            Err(CmtfaError::DomainViolation { index: 1, .. })
        ));
        assert!(matches!(
            EdgeWeightVector::new(vec![0.3, f64::NAN]),
            Err(CmtfaError::DomainViolation { index: 1, .. })
        ));
        assert_eq!(EdgeWeightVector::new(vec![0.3]), Err(CmtfaError::TooFewWeights(1)));
    }

    #[test]
    fn json_schema_validates() {
        let a: EdgeWeightVector = serde_json::from_str(r#"{"alpha": [0.9, -0.2]}"#).unwrap();
        assert_eq!(a.as_slice(), &[0.9, -0.2]);
        assert!(serde_json::from_str::<EdgeWeightVector>(r#"{"alpha": [0.9, 1.5]}"#).is_err());
        assert_eq!(serde_json::to_string(&a).unwrap(), r#"{"alpha":[0.9,-0.2]}"#);
    }

    #[test]
    fn sort_profile_examples() {
        let p = sort_profile(&alpha(&[0.2, 0.9, 0.1]));
        assert_eq!(p.magnitudes, vec![0.9, 0.2, 0.1]);
        assert_eq!(p.lead(), 1);

        let p = sort_profile(&alpha(&[-0.4, 0.4]));
        assert_eq!(p.magnitudes, vec![0.4, 0.4]);
        assert_eq!(p.permutation, vec![0, 1]);

        let p = sort_profile(&alpha(&[0.3, 0.5, 0.5]));
        assert_eq!(p.permutation, vec![1, 2, 0]);
    }

    #[test]
    fn sampling_shape_and_determinism() {
        let a = alpha(&[0.9, 0.2, 0.1]);
        let one = sample_star_model(&a, 1, 5).unwrap();
        assert_eq!(one.observations.shape(), (1, 3));
        assert!(one.observations.iter().all(|v| v.is_finite()));
        assert_eq!(sample_star_model(&a, 50, 9).unwrap(), sample_star_model(&a, 50, 9).unwrap());
        assert_ne!(sample_star_model(&a, 50, 9).unwrap(), sample_star_model(&a, 50, 10).unwrap());
        assert!(sample_star_model(&a, 0, 1).is_err());
    }

    #[test]
    fn empirical_covariance_converges() {
        let a = alpha(&[0.9, 0.2, 0.1]);
        let batch = sample_star_model(&a, 200_000, 2024).unwrap();
        let emp = batch.empirical_covariance();
        let pop = build_star_covariance(&a).matrix;
        let err = linalg::max_abs(&(emp - pop));
        assert!(err < 0.01, "max deviation {err}");
    }

    #[test]
    fn csv_header_and_rows() {
        let a = alpha(&[0.5, -0.3]);
        let batch = sample_star_model(&a, 3, 1).unwrap();
        let mut buf = Vec::new();
        batch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "X1,X2");
        assert_eq!(lines.len(), 4);
        let v: f64 = lines[1].split(',').next().unwrap().parse().unwrap();
        assert_eq!(v, batch.observations[(0, 0)]);
        assert!(!text.contains('\r'));
    }

    fn weights(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0.01f64..0.99, any::<bool>()), n)
            .prop_map(|v| v.into_iter().map(|(m, neg)| if neg { -m } else { m }).collect())
    }

    proptest! {
        #[test]
        fn minus_noise_is_rank_one(a in weights(2..=8)) {
            let alpha = EdgeWeightVector::new(a.clone()).unwrap();
            let mut m = build_star_covariance(&alpha).matrix;
            for i in 0..a.len() {
                m[(i, i)] -= 1.0 - a[i] * a[i];
            }
            let outer = alpha.as_dvector() * alpha.as_dvector().transpose();
            prop_assert!(linalg::max_abs(&(m - outer)) <= 1e-15);
        }

        #[test]
        fn permutation_equivariant(a in weights(2..=8), rot in 0usize..8) {
            let n = a.len();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let permuted: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            let s = build_star_covariance(&EdgeWeightVector::new(a).unwrap()).matrix;
            let sp = build_star_covariance(&EdgeWeightVector::new(permuted).unwrap()).matrix;
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(sp[(i, j)], s[(perm[i], perm[j])]);
                }
            }
        }

        #[test]
        fn covariance_positive_definite(a in weights(2..=10)) {
            let s = build_star_covariance(&EdgeWeightVector::new(a).unwrap());
            prop_assert!(linalg::lambda_min(&s.matrix) > 0.0);
        }

        #[test]
        fn sort_profile_round_trips(a in weights(2..=8)) {
            let alpha = EdgeWeightVector::new(a.clone()).unwrap();
            let p = sort_profile(&alpha);
            prop_assert!(p.magnitudes.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(p.to_original(&p.to_sorted(&a)), a);
        }
    }
}
