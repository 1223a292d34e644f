//! Dense kernels behind the factorized solver: a thin SVD with a fixed sign
//! convention, the orthogonal polar factor, and singular value thresholding.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Thin SVD `a = u * diag(sigma) * v_t`, singular values descending.
/// Each left singular vector is signed so that its largest-magnitude entry
/// is positive (first such entry on ties), with the matching row of `v_t`
/// flipped alongside.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_SWEEPS: usize = 10_000;

pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD input contains non-finite values".into()));
    }
    let svd = SVD::try_new(a.clone(), true, true, SVD_EPS, SVD_MAX_SWEEPS).ok_or_else(|| {
        Error::Numerical(format!("SVD of a {}x{} matrix did not converge", a.nrows(), a.ncols()))
    })?;
    let mut u = svd.u.expect("left vectors requested");
    let mut v_t = svd.v_t.expect("right vectors requested");
    for k in 0..u.ncols() {
        let col = u.column(k);
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            u.column_mut(k).neg_mut();
            v_t.row_mut(k).neg_mut();
        }
    }
    Ok(ThinSvd {
        u,
        sigma: svd.singular_values,
        v_t,
    })
}

/// Numerical-rank cutoff for a spectrum: values at or below it count as zero.
pub fn rank_tolerance(sigma: &DVector<f64>, rows: usize, cols: usize) -> f64 {
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    rows.max(cols) as f64 * f64::EPSILON * smax
}

/// Appends orthonormal vectors to `basis` (columns, orthonormal) until it
/// has `target` columns, by Gram-Schmidt against e_0, e_1, ... in order.
pub fn complete_basis(basis: &DMatrix<f64>, target: usize) -> DMatrix<f64> {
    complete_basis_from(basis, target, None)
}

/// Relative residual below which a candidate counts as already spanned.
const SPAN_TOL: f64 = 1e-8;

/// Like [`complete_basis`], but tries the columns of `candidates` in order
/// before the canonical vectors.
pub fn complete_basis_from(basis: &DMatrix<f64>, target: usize, candidates: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let dim = basis.nrows();
    let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    let extra = candidates.map_or(0, |c| c.ncols());
    let mut j = 0;
    while cols.len() < target && j < extra + dim {
        let mut v = if j < extra {
            candidates.expect("candidates present").column(j).into_owned()
        } else {
            let mut e = DVector::zeros(dim);
            e[j - extra] = 1.0;
            e
        };
        let start = v.norm();
        // two passes keep the completion orthogonal to working precision
        for _ in 0..2 {
            for b in &cols {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let norm = v.norm();
        let tol = if j < extra { SPAN_TOL * start } else { 1e-6 };
        if norm > tol && norm > 0.0 {
            cols.push(v / norm);
        }
        j += 1;
    }
    DMatrix::from_columns(&cols)
}

/// Orthogonal polar factor `P * Q^T` of `z` (thin SVD `z = P S Q^T`).
/// Directions with zero singular value are filled deterministically by
/// basis completion on both sides, so the result always has orthonormal
/// columns.
pub fn polar_factor(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, r) = z.shape();
    if r > m {
        return Err(Error::Dimension(format!(
            "polar factor needs a tall matrix, got {m}x{r}"
        )));
    }
    let svd = thin_svd(z)?;
    Ok(polar_from_svd(&svd, m, r, None))
}

/// Polar factor from a precomputed SVD. When `z` is rank deficient the
/// missing left directions are drawn first from the columns of `fill`
/// (if given), then from the canonical basis.
pub(crate) fn polar_from_svd(svd: &ThinSvd, m: usize, r: usize, fill: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let tol = rank_tolerance(&svd.sigma, m, r);
    let k = svd.sigma.iter().filter(|&&s| s > tol && s > 0.0).count();
    if k == r {
        return &svd.u * &svd.v_t;
    }
    let p = complete_basis_from(&svd.u.columns(0, k).into_owned(), r, fill);
    let q_range = svd.v_t.rows(0, k).transpose();
    let q = complete_basis(&q_range, r);
    p * q.transpose()
}

/// Singular value thresholding: `J diag(max(0, s - mu)) K^T`.
/// Returns the thresholded matrix and its (descending) singular values.
pub fn svt_with_spectrum(t: &DMatrix<f64>, mu: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if !(mu >= 0.0) {
        return Err(Error::Input(format!("svt threshold must be nonnegative, got {mu}")));
    }
    let (rows, cols) = t.shape();
    if rows == 0 || cols == 0 {
        return Ok((t.clone(), Vec::new()));
    }
    let svd = thin_svd(t)?;
    let shrunk: Vec<f64> = svd.sigma.iter().map(|&s| f64::max(0.0, s - mu)).collect();
    let keep = shrunk.iter().filter(|&&s| s > 0.0).count();
    let mut out = DMatrix::zeros(rows, cols);
    for k in 0..keep {
        out.ger(shrunk[k], &svd.u.column(k), &svd.v_t.row(k).transpose(), 1.0);
    }
    Ok((out, shrunk))
}

pub fn svt(t: &DMatrix<f64>, mu: f64) -> Result<DMatrix<f64>> {
    Ok(svt_with_spectrum(t, mu)?.0)
}

pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SVD input contains non-finite values".into()));
    }
    let svd = SVD::try_new(a.clone(), false, false, SVD_EPS, SVD_MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("singular value computation did not converge".into()))?;
    Ok(svd.singular_values.iter().copied().collect())
}

/// Largest absolute entry of `a^T a - I`.
pub fn orthonormality_defect(a: &DMatrix<f64>) -> f64 {
    let gram = a.transpose() * a;
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}
