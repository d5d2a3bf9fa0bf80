//! Dense linear-algebra kernels shared by the estimators.
//!
//! Every SVD in this crate reports singular values in ASCENDING order, so a
//! column selection `U[:, 0..k]` always picks the k least-excited left
//! directions. Rank decisions use a relative cutoff of `1e-12 * sigma_max`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::TimeSeries;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff used for numerical rank.
pub const RANK_TOL: f64 = 1e-12;

/// Full singular value decomposition with ascending singular values.
///
/// For an `m x n` input with `r = min(m, n)`, `left_vectors` is `m x m` and
/// `right_vectors` is `n x n`. `singular_values` has length `m` and is
/// paired with the columns of `left_vectors`; the first `m - r` entries are
/// structural zeros. The trailing `r` columns of both factors pair up, so
/// `A = U[:, m-r..] * diag(s[m-r..]) * V[:, n-r..]ᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub left_vectors: Matrix,
    pub singular_values: Vector,
    pub right_vectors: Matrix,
}

impl SvdResult {
    pub fn rows(&self) -> usize {
        self.left_vectors.nrows()
    }

    pub fn cols(&self) -> usize {
        self.right_vectors.nrows()
    }

    pub fn largest(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    pub fn reconstruct(&self) -> Matrix {
        let (m, n) = (self.rows(), self.cols());
        let r = m.min(n);
        let u = self.left_vectors.columns(m - r, r);
        let v = self.right_vectors.columns(n - r, r);
        let s = Matrix::from_diagonal(&self.singular_values.rows(m - r, r).into_owned());
        u * s * v.transpose()
    }
}

fn check_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidInput(format!("{what} is empty ({}x{})", a.nrows(), a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Extends an orthonormal `m x k` block to an `m x m` orthogonal matrix whose
/// first `k` columns are exactly `thin`.
fn complete_basis(thin: &Matrix) -> Matrix {
    let (m, k) = thin.shape();
    if k >= m {
        return thin.clone();
    }
    let mut full = Matrix::identity(m, m);
    if k == 0 {
        return full;
    }
    let mut qt = Matrix::identity(m, m);
    thin.clone().qr().q_tr_mul(&mut qt);
    let q = qt.transpose();
    full.columns_mut(0, k).copy_from(thin);
    full.columns_mut(k, m - k).copy_from(&q.columns(k, m - k));
    full
}

/// Thin SVD with singular values sorted descending: `(U, s, V)`.
fn thin_svd_desc(a: &Matrix) -> (Matrix, Vector, Matrix) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let s = svd.singular_values;
    let r = s.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let u_sorted = Matrix::from_fn(u.nrows(), r, |i, j| u[(i, order[j])]);
    let v_sorted = Matrix::from_fn(vt.ncols(), r, |i, j| vt[(order[j], i)]);
    let s_sorted = Vector::from_fn(r, |j, _| s[order[j]]);
    (u_sorted, s_sorted, v_sorted)
}

/// Full SVD, singular values ascending (zero-padded for rectangular or
/// rank-deficient inputs so that the leading left vectors span the left
/// null space).
pub fn svd_full(a: &Matrix) -> Result<SvdResult> {
    check_finite(a, "matrix")?;
    let (m, n) = a.shape();
    let r = m.min(n);
    let (u_thin, s_desc, v_thin) = thin_svd_desc(a);

    // Reverse to ascending, then place the thin block at the end of each factor.
    let u_asc = Matrix::from_fn(m, r, |i, j| u_thin[(i, r - 1 - j)]);
    let v_asc = Matrix::from_fn(n, r, |i, j| v_thin[(i, r - 1 - j)]);
    let u_full = complete_basis(&u_asc);
    let v_full = complete_basis(&v_asc);

    let left_vectors = rotate_thin_last(&u_full, r);
    let right_vectors = rotate_thin_last(&v_full, r);
    let mut singular_values = Vector::zeros(m);
    for j in 0..r {
        singular_values[m - r + j] = s_desc[r - 1 - j];
    }
    Ok(SvdResult { left_vectors, singular_values, right_vectors })
}

/// Moves the first `r` columns of `full` to the end, keeping their order.
fn rotate_thin_last(full: &Matrix, r: usize) -> Matrix {
    let m = full.ncols();
    let mut out = Matrix::zeros(full.nrows(), m);
    out.columns_mut(m - r, r).copy_from(&full.columns(0, r));
    out.columns_mut(0, m - r).copy_from(&full.columns(r, m - r));
    out
}

/// The `k` least-excited left singular directions of `a` (ascending order).
///
/// When `a` has `k` zero singular values this is an orthonormal basis of the
/// null space of `aᵀ`. Otherwise the same selection is returned rather than
/// an error.
pub fn left_null_basis(a: &Matrix, k: usize) -> Result<Matrix> {
    if k > a.nrows() {
        return Err(Error::Dimension(format!(
            "requested {k} null directions from a matrix with {} rows",
            a.nrows()
        )));
    }
    let svd = svd_full(a)?;
    Ok(svd.left_vectors.columns(0, k).into_owned())
}

/// The `k` dominant left singular directions of `a`, largest first.
pub fn dominant_left_basis(a: &Matrix, k: usize) -> Result<Matrix> {
    if k > a.nrows() {
        return Err(Error::Dimension(format!(
            "requested {k} dominant directions from a matrix with {} rows",
            a.nrows()
        )));
    }
    let svd = svd_full(a)?;
    let m = a.nrows();
    Ok(Matrix::from_fn(m, k, |i, j| svd.left_vectors[(i, m - 1 - j)]))
}

/// Sample covariance with divisor N.
pub fn sample_covariance(series: &TimeSeries) -> Result<Matrix> {
    covariance_of_rows(series.data())
}

pub(crate) fn covariance_of_rows(x: &Matrix) -> Result<Matrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { required: 2, actual: n });
    }
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.tr_mul(&centered) / n as f64;
    Ok(symmetrize(&cov))
}

/// Orthonormal basis of the column space; fails if `a` is rank deficient.
fn orthonormal_range(a: &Matrix, what: &str) -> Result<Matrix> {
    check_finite(a, what)?;
    if a.ncols() > a.nrows() {
        return Err(Error::Rank(format!("{what} has more columns than rows")));
    }
    let (u, s, _) = thin_svd_desc(a);
    let smax = s[0];
    let smin = s[s.len() - 1];
    if smax == 0.0 || smin <= RANK_TOL * smax {
        return Err(Error::Rank(format!("{what} is not of full column rank")));
    }
    Ok(u)
}

/// Canonical (principal) angles between `span(a)` and `span(b)`, in degrees,
/// ascending.
///
/// Cosines come from the singular values of `Qaᵀ Qb`; angles below 45° are
/// taken from the sines instead, which keeps small angles accurate.
pub fn canonical_angles(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "subspaces live in R^{} and R^{}",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormal_range(a, "first basis")?;
    let qb = orthonormal_range(b, "second basis")?;
    // Project the narrower basis onto the wider one.
    let (wide, narrow) = if qa.ncols() >= qb.ncols() { (qa, qb) } else { (qb, qa) };
    let k = narrow.ncols();
    let cross = wide.tr_mul(&narrow);
    let (_, cos_desc, _) = thin_svd_desc(&cross);
    let residual = &narrow - &wide * &cross;
    let (_, sin_desc, _) = thin_svd_desc(&residual);

    let angles = (0..k)
        .map(|i| {
            let c = cos_desc[i].clamp(0.0, 1.0);
            let s = sin_desc[k - 1 - i].clamp(0.0, 1.0);
            if c * c >= 0.5 { s.asin() } else { c.acos() }
        })
        .map(f64::to_degrees)
        .collect();
    Ok(angles)
}

/// Moore-Penrose pseudo-inverse with cutoff `1e-12 * sigma_max`.
pub fn pseudo_inverse(p: &Matrix) -> Matrix {
    let (m, n) = p.shape();
    if m == 0 || n == 0 || p.iter().all(|&x| x == 0.0) {
        return Matrix::zeros(n, m);
    }
    let (u, s, v) = thin_svd_desc(p);
    let cutoff = RANK_TOL * s[0];
    let inv: Vector = s.map(|x| if x > cutoff { 1.0 / x } else { 0.0 });
    v * Matrix::from_diagonal(&inv) * u.transpose()
}

pub fn frobenius_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok((a - b).norm())
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Solves `gram * x = rhs` for symmetric positive definite `gram`.
pub(crate) fn solve_spd(gram: &Matrix, rhs: &Matrix, what: &str) -> Result<Matrix> {
    let chol = cholesky_checked(gram).ok_or_else(|| Error::SingularGram(what.to_string()))?;
    Ok(chol.solve(rhs))
}

fn cholesky_checked(m: &Matrix) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if m.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let scale = m.diagonal().iter().copied().fold(0.0, f64::max);
    if scale <= 0.0 {
        return None;
    }
    let chol = symmetrize(m).cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..m.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-14 * scale {
        return None;
    }
    Some(chol)
}

/// `(ln|S|, S⁻¹)` for a symmetric positive definite `S`.
pub(crate) fn logdet_and_inverse(s: &Matrix, what: &str) -> Result<(f64, Matrix)> {
    let chol = cholesky_checked(s).ok_or_else(|| Error::SingularCovariance(what.to_string()))?;
    let l = chol.l_dirty();
    let logdet = 2.0 * (0..s.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    Ok((logdet, chol.inverse()))
}

/// Symmetric square root of a PSD matrix; negative eigenvalues are clamped
/// at zero.
pub fn psd_sqrt(s: &Matrix) -> Matrix {
    let eig = symmetrize(s).symmetric_eigen();
    let roots = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Smallest eigenvalue of the symmetric part of `s`.
pub fn min_eigenvalue(s: &Matrix) -> f64 {
    symmetrize(s).symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Symmetric within `tol` (relative to the largest entry) and PSD within
/// `tol * trace`.
pub fn is_symmetric_psd(s: &Matrix, tol: f64) -> bool {
    if !s.is_square() || s.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let scale = s.amax().max(1.0);
    if (s - s.transpose()).amax() > tol * scale {
        return false;
    }
    let trace = s.trace().abs().max(f64::MIN_POSITIVE);
    min_eigenvalue(s) >= -tol * trace.max(scale)
}

/// Smallest over largest singular value; zero for a zero matrix.
pub fn inverse_condition(a: &Matrix) -> f64 {
    let s = a.singular_values();
    let max = s.max();
    if max == 0.0 { 0.0 } else { s.min() / max }
}

/// Relative Frobenius change `|new - old| / |old|`, falling back to the
/// absolute change when `old` is zero.
pub(crate) fn relative_change(new: &Matrix, old: &Matrix) -> f64 {
    let denom = old.norm();
    let diff = (new - old).norm();
    if denom > 0.0 { diff / denom } else { diff }
}
