//! Small dense symmetric helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative singular-value cutoff used for numerical rank.
pub const RANK_CUTOFF: f64 = 1e-8;

/// Full spectrum of a symmetric matrix, eigenvalues ascending with matching
/// eigenvector columns.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Smallest eigenvalue and a unit eigenvector for it.
pub fn min_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (values, vectors) = symmetric_eigen(m);
    (values[0], vectors.column(0).into_owned())
}

/// Number of singular values above `RANK_CUTOFF * max(rows, cols) * σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let cutoff = RANK_CUTOFF * m.nrows().max(m.ncols()) as f64 * smax;
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// True iff `λ_min(m) ≥ -tol`, decided by attempting a Cholesky
/// factorization of `m + tol·I`. Much cheaper than a full eigensolve, which
/// matters inside the grid oracle.
pub fn psd_within(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = m[(j, j)] + tol;
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if diag <= 0.0 {
            return false;
        }
        let pivot = diag.sqrt();
        l[j * n + j] = pivot;
        for i in (j + 1)..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / pivot;
        }
    }
    true
}

/// `m - diag(d)`.
pub fn minus_diagonal(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, &di) in d.iter().enumerate() {
        out[(i, i)] -= di;
    }
    out
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}
