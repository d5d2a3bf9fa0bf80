//! The generative model.
//!
//! Measurements `y_k ∈ R^p` mix an `ℓ`-dimensional latent VAR process with
//! static noise injected through a complementary, possibly oblique,
//! subspace:
//!
//! ```text
//! y_k = P v_k + P̄ ε̄_k,                 ε̄_k ~ N(0, Σ_ε̄)
//! v_k = Σ_j B_j v_{k-j} + ε_k,          ε_k ~ N(0, Σ_ε)
//! ```
//!
//! The dual weights `[R R̄] = ([P P̄]⁻¹)ᵀ` recover the latent variables as
//! `v_k = Rᵀ y_k`, and `P Rᵀ` is the oblique projector onto the signal
//! subspace along the noise subspace.

use std::ops::Range;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numlin::{self, Matrix, Vector};

/// Samples in time order, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    data: Matrix,
}

impl TimeSeries {
    pub fn new(data: Matrix) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "time series must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("time series has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("rows have differing lengths".into()));
        }
        Self::new(Matrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }

    pub fn sample(&self, k: usize) -> Vector {
        self.data.row(k).transpose()
    }

    /// Rows `range` as a new series.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::Index { index: range.end, len: self.len() });
        }
        Ok(Self { data: self.data.rows(range.start, range.end - range.start).into_owned() })
    }

    pub fn head(&self, n: usize) -> Result<Self> {
        self.slice(0..n)
    }
}

/// Latent VAR coefficients `B_1..B_s` and innovation covariance `Σ_ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDynamics {
    pub coeffs: Vec<Matrix>,
    pub innovation_cov: Matrix,
}

impl LatentDynamics {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
}

/// Full parameter tuple `(P, P̄, {B_j}, Σ_ε, Σ_ε̄)`.
///
/// `dynamics` is `None` for data whose latent process is not a VAR (the
/// Lorenz case study), where only the measurement geometry is known.
#[derive(Debug, Clone, PartialEq)]
pub struct PredVarParams {
    loadings: Matrix,
    static_loadings: Matrix,
    dynamics: Option<LatentDynamics>,
    static_noise_cov: Matrix,
}

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

fn check_covariance(s: &Matrix, dim: usize, what: &str) -> Result<()> {
    if s.shape() != (dim, dim) {
        return Err(Error::Dimension(format!("{what} must be {dim}x{dim}, got {:?}", s.shape())));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidCovariance(format!("{what} has non-finite entries")));
    }
    let scale = s.amax().max(1.0);
    if (s - s.transpose()).amax() > SYMMETRY_TOL * scale {
        return Err(Error::InvalidCovariance(format!("{what} is not symmetric")));
    }
    if numlin::min_eigenvalue(s) < -PSD_TOL * scale {
        return Err(Error::InvalidCovariance(format!("{what} is not positive semidefinite")));
    }
    Ok(())
}

impl PredVarParams {
    pub fn new(
        loadings: Matrix,
        static_loadings: Matrix,
        dynamics: Option<LatentDynamics>,
        static_noise_cov: Matrix,
    ) -> Result<Self> {
        let (p, ell) = loadings.shape();
        if ell == 0 || ell >= p {
            return Err(Error::Config(format!("latent dimension must satisfy 1 <= ell < p, got ell={ell}, p={p}")));
        }
        if static_loadings.shape() != (p, p - ell) {
            return Err(Error::Dimension(format!(
                "static loadings must be {p}x{}, got {:?}",
                p - ell,
                static_loadings.shape()
            )));
        }
        if loadings.iter().chain(static_loadings.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("loadings have non-finite entries".into()));
        }
        let rcond = numlin::inverse_condition(&stack_columns(&loadings, &static_loadings));
        if rcond <= 1e-10 {
            return Err(Error::SingularLoadings { rcond });
        }
        check_covariance(&static_noise_cov, p - ell, "static noise covariance")?;
        if let Some(dyn_) = &dynamics {
            if dyn_.coeffs.iter().any(|b| b.shape() != (ell, ell)) {
                return Err(Error::Dimension(format!("VAR coefficients must be {ell}x{ell}")));
            }
            check_covariance(&dyn_.innovation_cov, ell, "innovation covariance")?;
        }
        Ok(Self { loadings, static_loadings, dynamics, static_noise_cov })
    }

    pub fn p(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn ell(&self) -> usize {
        self.loadings.ncols()
    }

    /// VAR order, zero when the dynamics are unset.
    pub fn order(&self) -> usize {
        self.dynamics.as_ref().map_or(0, LatentDynamics::order)
    }

    pub fn loadings(&self) -> &Matrix {
        &self.loadings
    }

    pub fn static_loadings(&self) -> &Matrix {
        &self.static_loadings
    }

    pub fn dynamics(&self) -> Option<&LatentDynamics> {
        self.dynamics.as_ref()
    }

    pub fn static_noise_cov(&self) -> &Matrix {
        &self.static_noise_cov
    }

    /// Replaces the latent dynamics, keeping the measurement geometry.
    pub fn with_dynamics(self, dynamics: LatentDynamics) -> Result<Self> {
        Self::new(self.loadings, self.static_loadings, Some(dynamics), self.static_noise_cov)
    }

    /// `Σ_e = P Σ_ε Pᵀ + P̄ Σ_ε̄ P̄ᵀ`; the latent term is omitted when the
    /// dynamics are unset.
    pub fn residual_cov(&self) -> Matrix {
        let static_part = &self.static_loadings * &self.static_noise_cov * self.static_loadings.transpose();
        let total = match &self.dynamics {
            Some(d) => &self.loadings * &d.innovation_cov * self.loadings.transpose() + static_part,
            None => static_part,
        };
        numlin::symmetrize(&total)
    }
}

pub(crate) fn stack_columns(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// The dual pair `(R, R̄)` with `[R R̄]ᵀ [P P̄] = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrices {
    /// `R`, p x ℓ: extracts the latent variables.
    pub signal: Matrix,
    /// `R̄`, p x (p-ℓ): extracts the static noise.
    pub noise: Matrix,
}

impl WeightMatrices {
    pub fn stacked(&self) -> Matrix {
        stack_columns(&self.signal, &self.noise)
    }
}

pub fn weights_from_loadings(params: &PredVarParams) -> Result<WeightMatrices> {
    dual_weights(params.loadings(), params.static_loadings())
}

/// `[R R̄] = ([P P̄]⁻¹)ᵀ`, split after column ℓ.
pub fn dual_weights(loadings: &Matrix, static_loadings: &Matrix) -> Result<WeightMatrices> {
    let ell = loadings.ncols();
    let full = stack_columns(loadings, static_loadings);
    if !full.is_square() {
        return Err(Error::Dimension(format!("[P P̄] must be square, got {:?}", full.shape())));
    }
    let rcond = numlin::inverse_condition(&full);
    if rcond <= 1e-10 {
        return Err(Error::SingularLoadings { rcond });
    }
    let inv = full.clone().lu().try_inverse().ok_or(Error::SingularLoadings { rcond })?;
    let w = inv.transpose();
    let p = w.nrows();
    Ok(WeightMatrices {
        signal: w.columns(0, ell).into_owned(),
        noise: w.columns(ell, p - ell).into_owned(),
    })
}

/// `Π = P Rᵀ`, idempotent when `Rᵀ P = I`.
pub fn oblique_projector(loadings: &Matrix, weights: &Matrix) -> Result<Matrix> {
    if loadings.shape() != weights.shape() {
        return Err(Error::Dimension(format!("P is {:?} but R is {:?}", loadings.shape(), weights.shape())));
    }
    let ell = loadings.ncols();
    let residual = (weights.tr_mul(loadings) - Matrix::identity(ell, ell)).norm();
    if residual > 1e-8 {
        return Err(Error::NotDualPair { residual });
    }
    Ok(loadings * weights.transpose())
}

/// Spectral radius of the `sℓ x sℓ` companion matrix of `B_1..B_s`.
pub fn companion_spectral_radius(coeffs: &[Matrix]) -> f64 {
    let Some(first) = coeffs.first() else { return 0.0 };
    let ell = first.nrows();
    let s = coeffs.len();
    let mut companion = Matrix::zeros(s * ell, s * ell);
    for (j, b) in coeffs.iter().enumerate() {
        companion.view_mut((0, j * ell), (ell, ell)).copy_from(b);
    }
    if s > 1 {
        companion.view_mut((ell, 0), ((s - 1) * ell, (s - 1) * ell)).fill_with_identity();
    }
    companion.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub const DEFAULT_BURN_IN: usize = 500;

/// Draws `n + s` samples of `(y, v)` from the model.
///
/// The latent history starts at zero and the first `burn_in` steps are
/// discarded. Innovations are drawn first for every step, then the static
/// noise for the recorded samples, all from one ChaCha8 stream seeded with
/// `seed`.
pub fn simulate(params: &PredVarParams, n: usize, seed: u64, burn_in: usize) -> Result<(TimeSeries, TimeSeries)> {
    let dynamics = params.dynamics().ok_or(Error::MissingDynamics)?;
    let s = dynamics.order();
    if s == 0 {
        return Err(Error::Order(0));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    let radius = companion_spectral_radius(&dynamics.coeffs);
    if radius >= 1.0 {
        return Err(Error::UnstableDynamics { radius });
    }

    let (p, ell) = (params.p(), params.ell());
    let keep = n + s;
    let total = burn_in + keep;
    let innov_root = numlin::psd_sqrt(&dynamics.innovation_cov);
    let noise_root = numlin::psd_sqrt(params.static_noise_cov());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |dim: usize| -> Vector { DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng)) };

    let mut latent = Matrix::zeros(keep, ell);
    // Ring of the last s latent samples, most recent first.
    let mut history: Vec<Vector> = vec![Vector::zeros(ell); s];
    for step in 0..total {
        let mut v = &innov_root * draw(ell);
        for (b, past) in dynamics.coeffs.iter().zip(&history) {
            v += b * past;
        }
        history.rotate_right(1);
        history[0] = v.clone();
        if step >= burn_in {
            latent.row_mut(step - burn_in).copy_from(&v.transpose());
        }
    }

    let mut y = latent.clone() * params.loadings().transpose();
    for k in 0..keep {
        let noise = &noise_root * draw(p - ell);
        let mixed = params.static_loadings() * noise;
        let mut row = y.row_mut(k);
        row += mixed.transpose();
    }
    Ok((TimeSeries::new(y)?, TimeSeries::new(latent)?))
}

/// `ṽ_k = Σ_j B_j v_{k-j}`, with `history[0] = v_{k-1}`.
pub fn one_step_predict(coeffs: &[Matrix], history: &[Vector]) -> Result<Vector> {
    if history.len() != coeffs.len() {
        return Err(Error::Dimension(format!(
            "history has {} samples but the VAR order is {}",
            history.len(),
            coeffs.len()
        )));
    }
    let ell = coeffs.first().map_or(0, |b| b.nrows());
    let mut out = Vector::zeros(ell);
    for (b, v) in coeffs.iter().zip(history) {
        if v.len() != b.ncols() {
            return Err(Error::Dimension(format!("latent sample has length {}, expected {}", v.len(), b.ncols())));
        }
        out += b * v;
    }
    Ok(out)
}

/// Measurement-space VAR with rank-ℓ coefficients `A_j = P B_j Rᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedRankVar {
    pub coeffs: Vec<Matrix>,
    pub residual_cov: Matrix,
}

pub fn to_reduced_rank_var(params: &PredVarParams) -> Result<ReducedRankVar> {
    let dynamics = params.dynamics().ok_or(Error::MissingDynamics)?;
    let weights = weights_from_loadings(params)?;
    let coeffs = dynamics
        .coeffs
        .iter()
        .map(|b| params.loadings() * b * weights.signal.transpose())
        .collect();
    Ok(ReducedRankVar { coeffs, residual_cov: params.residual_cov() })
}

/// Observationally equivalent tuple
/// `(P M⁻¹, M Σ_ε Mᵀ, M B_j M⁻¹, P̄ M̄⁻¹, M̄ Σ_ε̄ M̄ᵀ)`.
pub fn equivalent_transform(params: &PredVarParams, m: &Matrix, m_bar: &Matrix) -> Result<PredVarParams> {
    let (ell, q) = (params.ell(), params.p() - params.ell());
    if m.shape() != (ell, ell) || m_bar.shape() != (q, q) {
        return Err(Error::Dimension(format!("M must be {ell}x{ell} and M̄ {q}x{q}")));
    }
    let invert = |x: &Matrix, what: &str| -> Result<Matrix> {
        if numlin::inverse_condition(x) <= 1e-14 {
            return Err(Error::SingularTransform(what.to_string()));
        }
        x.clone().lu().try_inverse().ok_or_else(|| Error::SingularTransform(what.to_string()))
    };
    let m_inv = invert(m, "M")?;
    let m_bar_inv = invert(m_bar, "M̄")?;

    let dynamics = params.dynamics().map(|d| LatentDynamics {
        coeffs: d.coeffs.iter().map(|b| m * b * &m_inv).collect(),
        innovation_cov: numlin::symmetrize(&(m * &d.innovation_cov * m.transpose())),
    });
    PredVarParams::new(
        params.loadings() * &m_inv,
        params.static_loadings() * &m_bar_inv,
        dynamics,
        numlin::symmetrize(&(m_bar * params.static_noise_cov() * m_bar.transpose())),
    )
}
