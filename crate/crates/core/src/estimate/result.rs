use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{weights_from_loadings, LatentDynamics, PredVarParams, TimeSeries, WeightMatrices};
use crate::numlin::{self, Matrix, Vector};

/// Which estimator produced a [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    PredVar,
    OneShot,
    Orth,
    /// Ground-truth parameters wrapped for evaluation.
    Truth,
}

impl Algorithm {
    pub const ESTIMATORS: [Algorithm; 3] = [Algorithm::OneShot, Algorithm::PredVar, Algorithm::Orth];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PredVar => "predvar",
            Algorithm::OneShot => "oneshot",
            Algorithm::Orth => "orth",
            Algorithm::Truth => "truth",
        }
    }

    /// Whether the weights are orthonormal by construction.
    pub fn orthonormal_weights(self) -> bool {
        matches!(self, Algorithm::PredVar | Algorithm::OneShot)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "predvar" => Ok(Algorithm::PredVar),
            "oneshot" | "os" => Ok(Algorithm::OneShot),
            "orth" => Ok(Algorithm::Orth),
            "truth" => Ok(Algorithm::Truth),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Objective values recorded after one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveRecord {
    pub iteration: usize,
    /// `None` when the innovation covariance was singular.
    pub dlv: Option<f64>,
    /// `None` when the measurement residual covariance was singular.
    pub proj: Option<f64>,
}

/// Per-channel affine map `z = (y - mean) / scale` applied before fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub mean: Vector,
    pub scale: Vector,
}

impl Scaling {
    pub fn identity(p: usize) -> Self {
        Self { mean: Vector::zeros(p), scale: Vector::from_element(p, 1.0) }
    }

    /// Mean and standard deviation (divisor N) of each channel. Constant
    /// channels keep unit scale.
    pub fn standardizing(y: &TimeSeries) -> Self {
        let data = y.data();
        let n = data.nrows() as f64;
        let p = data.ncols();
        let mut mean = Vector::zeros(p);
        let mut scale = Vector::from_element(p, 1.0);
        for j in 0..p {
            let col = data.column(j);
            let m = col.sum() / n;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            mean[j] = m;
            let sd = var.sqrt();
            if sd > 1e-12 * m.abs().max(1.0) {
                scale[j] = sd;
            }
        }
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, y: &TimeSeries) -> Result<TimeSeries> {
        if y.dim() != self.dim() {
            return Err(Error::Dimension(format!("scaling has {} channels, data has {}", self.dim(), y.dim())));
        }
        let mut z = y.data().clone();
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
            col /= self.scale[j];
        }
        TimeSeries::new(z)
    }

    fn diag(&self) -> Matrix {
        Matrix::from_diagonal(&self.scale)
    }

    fn inv_diag(&self) -> Matrix {
        Matrix::from_diagonal(&self.scale.map(|x| 1.0 / x))
    }
}

/// Residuals of the identities that hold at a fixed point of the
/// alternation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// `‖R̂ᵀP̂ − I‖_F`.
    pub dual: f64,
    /// `‖R̂ᵀΣ̂_eR̂ − Σ̂_ε‖_F`.
    pub innovation: f64,
    /// `innovation / ‖Σ̂_ε‖_F`.
    pub innovation_relative: f64,
    /// `‖R̂ᵀΣ̂_eR̄̂‖_F / ‖Σ̂_e‖_F`.
    pub constraint_relative: f64,
}

const ORTHONORMAL_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-6;

/// Estimates in the standardized frame together with the scaling that maps
/// them back to original units.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub algorithm: Algorithm,
    pub params: PredVarParams,
    pub weights: WeightMatrices,
    /// `Σ̂_e`, p x p.
    pub residual_cov: Matrix,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<ObjectiveRecord>,
    pub scaling: Scaling,
}

impl FitResult {
    /// Wraps true parameters (with dynamics) so they can be evaluated like a
    /// fit.
    pub fn from_truth(params: PredVarParams) -> Result<Self> {
        if params.dynamics().is_none() {
            return Err(Error::MissingDynamics);
        }
        let weights = weights_from_loadings(&params)?;
        let residual_cov = params.residual_cov();
        let p = params.p();
        Ok(Self {
            algorithm: Algorithm::Truth,
            params,
            weights,
            residual_cov,
            iterations: 0,
            converged: true,
            objective_trace: Vec::new(),
            scaling: Scaling::identity(p),
        })
    }

    pub fn p(&self) -> usize {
        self.params.p()
    }

    pub fn ell(&self) -> usize {
        self.params.ell()
    }

    pub fn order(&self) -> usize {
        self.params.order()
    }

    pub fn dynamics(&self) -> Result<&LatentDynamics> {
        self.params.dynamics().ok_or(Error::MissingDynamics)
    }

    /// `P̂R̂ᵀ` in the standardized frame.
    pub fn projector(&self) -> Matrix {
        self.params.loadings() * self.weights.signal.transpose()
    }

    /// `D P̂ R̂ᵀ D⁻¹`, acting on raw measurements.
    pub fn projector_original(&self) -> Matrix {
        self.scaling.diag() * self.projector() * self.scaling.inv_diag()
    }

    pub fn loadings_original(&self) -> Matrix {
        self.scaling.diag() * self.params.loadings()
    }

    pub fn weights_original(&self) -> Matrix {
        self.scaling.inv_diag() * &self.weights.signal
    }

    pub fn residual_cov_original(&self) -> Matrix {
        let d = self.scaling.diag();
        numlin::symmetrize(&(&d * &self.residual_cov * &d))
    }

    /// `P̂ Σ̂_ε P̂ᵀ` in original units.
    pub fn em_signal_prediction_cov(&self) -> Result<Matrix> {
        let p = self.loadings_original();
        Ok(numlin::symmetrize(&(&p * &self.dynamics()?.innovation_cov * p.transpose())))
    }

    /// `v̂_k = R̂ᵀ D⁻¹ (y_k − μ)` for every row of raw `y`.
    pub fn extract(&self, y: &TimeSeries) -> Result<TimeSeries> {
        let z = self.scaling.apply(y)?;
        TimeSeries::new(z.data() * &self.weights.signal)
    }

    /// Reconstructed signal `Π̂ y_k` for every row of raw `y`.
    pub fn reconstruct_signal(&self, y: &TimeSeries) -> Result<Matrix> {
        if y.dim() != self.p() {
            return Err(Error::Dimension(format!("fit has p = {}, data has {}", self.p(), y.dim())));
        }
        Ok(y.data() * self.projector_original().transpose())
    }

    /// Predicted signal for rows `k = s..len` of raw `y`, using only the
    /// samples of `y` as history: `D P̂ ṽ̂_k + Π̂ μ`.
    pub fn predict_signal(&self, y: &TimeSeries) -> Result<Matrix> {
        let dynamics = self.dynamics()?;
        let s = dynamics.order();
        if y.len() <= s {
            return Err(Error::InsufficientData { required: s + 1, actual: y.len() });
        }
        let v = self.extract(y)?;
        let n = y.len() - s;
        let ell = self.ell();
        let mut predicted = Matrix::zeros(n, ell);
        for (j, b) in dynamics.coeffs.iter().enumerate() {
            // rows k - (j+1) for k = s..len
            let lagged = v.data().rows(s - j - 1, n);
            predicted += lagged * b.transpose();
        }
        let offset = self.projector_original() * &self.scaling.mean;
        let mut out = predicted * self.loadings_original().transpose();
        for mut row in out.row_iter_mut() {
            row += offset.transpose();
        }
        Ok(out)
    }

    pub fn identity_residuals(&self) -> Result<IdentityResiduals> {
        let ell = self.ell();
        let r = &self.weights.signal;
        let dual = (r.tr_mul(self.params.loadings()) - Matrix::identity(ell, ell)).norm();
        let innov = &self.dynamics()?.innovation_cov;
        let innovation = (r.transpose() * &self.residual_cov * r - innov).norm();
        let innovation_relative = innovation / innov.norm().max(f64::MIN_POSITIVE);
        let constraint = (r.transpose() * &self.residual_cov * &self.weights.noise).norm();
        let constraint_relative = constraint / self.residual_cov.norm().max(f64::MIN_POSITIVE);
        Ok(IdentityResiduals { dual, innovation, innovation_relative, constraint_relative })
    }

    /// Shape, covariance and weight checks shared by every estimator.
    /// Converged estimates must also satisfy the fixed-point identities.
    pub fn validate(&self) -> Result<()> {
        let (p, ell) = (self.p(), self.ell());
        let dynamics = self.dynamics()?;
        if dynamics.order() == 0 {
            return Err(Error::Order(0));
        }
        if self.weights.signal.shape() != (p, ell) || self.weights.noise.shape() != (p, p - ell) {
            return Err(Error::Dimension("weight matrices do not match the loadings".into()));
        }
        if self.residual_cov.shape() != (p, p) || self.scaling.dim() != p {
            return Err(Error::Dimension("residual covariance or scaling has the wrong size".into()));
        }
        if !numlin::is_symmetric_psd(&self.residual_cov, 1e-10) {
            return Err(Error::InvalidCovariance("Σ̂_e is not symmetric PSD".into()));
        }
        if self.algorithm.orthonormal_weights() {
            let gap = (self.weights.signal.tr_mul(&self.weights.signal) - Matrix::identity(ell, ell)).norm();
            if gap > ORTHONORMAL_TOL {
                return Err(Error::InvalidInput(format!("R̂ is not orthonormal: |R̂ᵀR̂ − I|_F = {gap:.3e}")));
            }
        }
        if self.converged && self.algorithm != Algorithm::Truth {
            let res = self.identity_residuals()?;
            if res.dual > IDENTITY_TOL {
                return Err(Error::NotDualPair { residual: res.dual });
            }
            if res.innovation_relative > IDENTITY_TOL {
                return Err(Error::InvalidCovariance(format!(
                    "R̂ᵀΣ̂_eR̂ differs from Σ̂_ε by {:.3e} (relative)",
                    res.innovation_relative
                )));
            }
        }
        Ok(())
    }
}
