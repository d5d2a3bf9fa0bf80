//! Synthetic data with Lorenz latent dynamics mixed into six sensors.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{self, dual_weights, PredVarParams, TimeSeries};
use crate::numlin::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorenzConfig {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    pub initial_state: [f64; 3],
    pub integrator: Integrator,
    /// Leading steps dropped before recording.
    pub discard: usize,
}

impl Default for LorenzConfig {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            dt: 0.01,
            initial_state: [1.0, 1.0, 1.0],
            integrator: Integrator::Rk4,
            discard: 1000,
        }
    }
}

impl LorenzConfig {
    fn derivative(&self, x: [f64; 3]) -> [f64; 3] {
        [
            self.sigma * (x[1] - x[0]),
            x[0] * (self.rho - x[2]) - x[1],
            x[0] * x[1] - self.beta * x[2],
        ]
    }

    fn step(&self, x: [f64; 3]) -> [f64; 3] {
        let h = self.dt;
        let axpy = |a: [f64; 3], k: [f64; 3], c: f64| [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2]];
        match self.integrator {
            Integrator::Euler => axpy(x, self.derivative(x), h),
            Integrator::Rk4 => {
                let k1 = self.derivative(x);
                let k2 = self.derivative(axpy(x, k1, h / 2.0));
                let k3 = self.derivative(axpy(x, k2, h / 2.0));
                let k4 = self.derivative(axpy(x, k3, h));
                std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            }
        }
    }
}

/// `n` states recorded after each step, once `discard` steps have passed.
pub fn integrate_lorenz(config: &LorenzConfig, n: usize) -> Result<TimeSeries> {
    if n == 0 {
        return Err(Error::InvalidInput("at least one sample is required".into()));
    }
    if !(config.dt.is_finite() && config.dt > 0.0) {
        return Err(Error::Config(format!("integration step must be positive, got {}", config.dt)));
    }
    let mut x = config.initial_state;
    let mut out = Matrix::zeros(n, 3);
    for step in 0..config.discard + n {
        x = config.step(x);
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Integration { step: step + 1 });
        }
        if step >= config.discard {
            let row = step - config.discard;
            for (j, c) in x.iter().enumerate() {
                out[(row, j)] = *c;
            }
        }
    }
    TimeSeries::new(out)
}

/// Signal loadings `[I₃; 0]` of the six-sensor case study.
pub fn case_study_loadings() -> Matrix {
    let mut p = Matrix::zeros(6, 3);
    p.view_mut((0, 0), (3, 3)).fill_with_identity();
    p
}

/// Oblique static loadings of the six-sensor case study.
pub fn case_study_static_loadings() -> Matrix {
    Matrix::from_row_slice(
        6,
        3,
        &[
            -0.2997, -0.4611, -0.2868, //
            -0.2403, 0.2559, 0.6444, //
            -0.1334, 0.5749, -0.5168, //
            -0.2997, -0.4611, -0.2868, //
            -0.5400, -0.2052, 0.3576, //
            -0.6733, 0.3697, -0.1592,
        ],
    )
}

/// Static loadings `[0; I₃]`, orthogonal to the signal loadings.
pub fn orth_static_loadings() -> Matrix {
    let mut p = Matrix::zeros(6, 3);
    p.view_mut((3, 0), (3, 3)).fill_with_identity();
    p
}

/// How the static noise covariance is matched to the latent data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseVariance {
    /// `diag(var v₁, var v₂, var v₃)`.
    Diagonal,
    /// The full sample covariance of the latent data.
    Full,
    /// `(tr Cov(v) / 3) I`.
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    /// Oblique static loadings.
    Paper,
    /// Orthogonal static loadings, same latent and noise streams.
    Orth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub lorenz: LorenzConfig,
    pub samples: usize,
    /// Subtract the window mean from the latent coordinates.
    pub center: bool,
    pub noise: NoiseVariance,
    pub train_len: usize,
    pub test_len: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            lorenz: LorenzConfig::default(),
            samples: 10_000,
            center: true,
            noise: NoiseVariance::Diagonal,
            train_len: 3000,
            test_len: 3000,
        }
    }
}

/// Measurements, latent truth and the static noise stream that built them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub y: TimeSeries,
    pub v_true: TimeSeries,
    /// `ε̄`, one row per sample.
    pub noise: TimeSeries,
    pub params_true: PredVarParams,
    pub train_range: Range<usize>,
    pub test_range: Range<usize>,
    pub seed: u64,
}

fn check_range(range: &Range<usize>, len: usize) -> Result<()> {
    if range.start >= range.end || range.end > len {
        return Err(Error::Index { index: range.end, len });
    }
    Ok(())
}

impl SyntheticDataset {
    /// Assembles a dataset from stored parts; the noise stream is recovered
    /// as `R̄ᵀ y_k`.
    pub fn from_parts(
        y: TimeSeries,
        v_true: TimeSeries,
        params_true: PredVarParams,
        train_range: Range<usize>,
        test_range: Range<usize>,
        seed: u64,
    ) -> Result<Self> {
        if y.len() != v_true.len() {
            return Err(Error::Dimension(format!("y has {} samples, v_true has {}", y.len(), v_true.len())));
        }
        if y.dim() != params_true.p() || v_true.dim() != params_true.ell() {
            return Err(Error::Dimension("data dimensions do not match the true loadings".into()));
        }
        check_range(&train_range, y.len())?;
        check_range(&test_range, y.len())?;
        if train_range.start < test_range.end && test_range.start < train_range.end {
            return Err(Error::Config("train and test ranges overlap".into()));
        }
        let weights = model::weights_from_loadings(&params_true)?;
        let noise = TimeSeries::new(y.data() * &weights.noise)?;
        Ok(Self { y, v_true, noise, params_true, train_range, test_range, seed })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn train(&self) -> TimeSeries {
        self.y.slice(self.train_range.clone()).expect("validated range")
    }

    pub fn test(&self) -> TimeSeries {
        self.y.slice(self.test_range.clone()).expect("validated range")
    }

    /// `P Rᵀ` of the generating model.
    pub fn true_projector(&self) -> Result<Matrix> {
        let w = model::weights_from_loadings(&self.params_true)?;
        Ok(self.params_true.loadings() * w.signal.transpose())
    }
}

fn noise_cov(v: &TimeSeries, kind: NoiseVariance) -> Result<Matrix> {
    let cov = numlin::sample_covariance(v)?;
    Ok(match kind {
        NoiseVariance::Full => cov,
        NoiseVariance::Diagonal => Matrix::from_diagonal(&cov.diagonal()),
        NoiseVariance::Total => Matrix::identity(cov.nrows(), cov.nrows()) * (cov.trace() / cov.nrows() as f64),
    })
}

/// Gaussian rows with covariance `cov`, drawn row by row from one ChaCha8
/// stream.
pub(crate) fn gaussian_rows(n: usize, cov: &Matrix, rng: &mut ChaCha8Rng) -> Matrix {
    let d = cov.nrows();
    let mut z = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            z[(i, j)] = StandardNormal.sample(rng);
        }
    }
    z * numlin::psd_sqrt(cov)
}

pub fn case_study(kind: CaseKind, seed: u64, config: &StudyConfig) -> Result<SyntheticDataset> {
    let n = config.samples;
    if config.train_len == 0 || config.test_len == 0 || config.train_len.max(config.test_len) > n {
        return Err(Error::Config(format!(
            "train ({}) and test ({}) lengths must be positive and at most {n}",
            config.train_len, config.test_len
        )));
    }
    let mut v = integrate_lorenz(&config.lorenz, n)?.into_data();
    if config.center {
        let mean = v.row_mean();
        for mut row in v.row_iter_mut() {
            row -= &mean;
        }
    }
    let v = TimeSeries::new(v)?;
    let sigma_bar = noise_cov(&v, config.noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = TimeSeries::new(gaussian_rows(n, &sigma_bar, &mut rng))?;

    let loadings = case_study_loadings();
    let static_loadings = match kind {
        CaseKind::Paper => case_study_static_loadings(),
        CaseKind::Orth => orth_static_loadings(),
    };
    let y = v.data() * loadings.transpose() + noise.data() * static_loadings.transpose();
    let params_true = PredVarParams::new(loadings, static_loadings, None, sigma_bar)?;
    Ok(SyntheticDataset {
        y: TimeSeries::new(y)?,
        v_true: v,
        noise,
        params_true,
        train_range: 0..config.train_len,
        test_range: n - config.test_len..n,
        seed,
    })
}

/// The oblique six-sensor case study with default settings.
pub fn paper_case_study(seed: u64) -> SyntheticDataset {
    case_study(CaseKind::Paper, seed, &StudyConfig::default()).expect("default case study is well posed")
}

/// The orthogonal variant with the same latent and noise streams.
pub fn orth_case_study(seed: u64) -> SyntheticDataset {
    case_study(CaseKind::Orth, seed, &StudyConfig::default()).expect("default case study is well posed")
}

/// Data simulated from a full model (with dynamics): `n + s` samples, the
/// first half for training and the second half for testing.
pub fn simulated_dataset(params: &PredVarParams, n: usize, seed: u64) -> Result<SyntheticDataset> {
    let (y, v) = model::simulate(params, n, seed, model::DEFAULT_BURN_IN)?;
    let len = y.len();
    let w = dual_weights(params.loadings(), params.static_loadings())?;
    let noise = TimeSeries::new(y.data() * &w.noise)?;
    Ok(SyntheticDataset {
        y,
        v_true: v,
        noise,
        params_true: params.clone(),
        train_range: 0..len / 2,
        test_range: len / 2..len,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attractor_stays_in_box() {
        let v = integrate_lorenz(&LorenzConfig::default(), 10_000).unwrap();
        for row in v.data().row_iter() {
            assert!(row[0].abs() <= 25.0 && row[1].abs() <= 30.0 && (0.0..=55.0).contains(&row[2]));
        }
    }

    #[test]
    fn subcritical_rho_decays_to_origin() {
        let cfg = LorenzConfig { rho: 0.5, discard: 0, ..LorenzConfig::default() };
        let v = integrate_lorenz(&cfg, 10_000).unwrap();
        assert!(v.sample(9_999).norm() < 1e-3);
    }

    #[test]
    fn integration_is_deterministic() {
        let cfg = LorenzConfig::default();
        assert_eq!(integrate_lorenz(&cfg, 500).unwrap(), integrate_lorenz(&cfg, 500).unwrap());
    }

    #[test]
    fn divergent_run_reported() {
        let cfg = LorenzConfig { dt: 10.0, discard: 0, ..LorenzConfig::default() };
        assert!(matches!(integrate_lorenz(&cfg, 1000), Err(Error::Integration { .. })));
        assert!(integrate_lorenz(&LorenzConfig { dt: 0.0, ..LorenzConfig::default() }, 5).is_err());
    }

    #[test]
    fn step_halving_agrees() {
        let coarse = LorenzConfig { discard: 0, ..LorenzConfig::default() };
        let fine = LorenzConfig { dt: 0.005, discard: 0, ..LorenzConfig::default() };
        let a = integrate_lorenz(&coarse, 100).unwrap();
        let b = integrate_lorenz(&fine, 200).unwrap();
        for k in 0..100 {
            let (x, z) = (a.sample(k), b.sample(2 * k + 1));
            assert!((&x - &z).norm() <= 5e-4 * x.norm(), "step {k}: {x} vs {z}");
        }
    }

    #[test]
    fn oblique_geometry() {
        let w = dual_weights(&case_study_loadings(), &case_study_static_loadings()).unwrap();
        let angles = numlin::canonical_angles(&w.signal, &case_study_loadings()).unwrap();
        for (a, want) in angles.iter().zip([23.99, 51.27, 60.97]) {
            assert!((a - want).abs() < 0.05, "{angles:?}");
        }
        let w = dual_weights(&case_study_loadings(), &orth_static_loadings()).unwrap();
        let angles = numlin::canonical_angles(&w.signal, &case_study_loadings()).unwrap();
        assert!(angles.iter().all(|a| *a < 1e-6));
    }

    #[test]
    fn case_study_shapes_and_identity() {
        let d = paper_case_study(7);
        assert_eq!((d.y.len(), d.y.dim()), (10_000, 6));
        assert_eq!((d.v_true.len(), d.v_true.dim()), (10_000, 3));
        assert_eq!(d.train_range, 0..3000);
        assert_eq!(d.test_range, 7000..10_000);
        let signal = d.v_true.data() * d.params_true.loadings().transpose();
        let noise = d.noise.data() * d.params_true.static_loadings().transpose();
        let gap = (d.y.data() - signal - noise).amax();
        assert!(gap <= 1e-12 * d.y.data().amax(), "{gap}");
    }

    #[test]
    fn orth_case_shares_streams() {
        let (a, b) = (paper_case_study(3), orth_case_study(3));
        assert_eq!(a.v_true, b.v_true);
        assert_eq!(a.noise, b.noise);
        assert_eq!(b.y.data().columns(0, 3), b.v_true.data().columns(0, 3));
        assert_eq!(paper_case_study(3), a);
        assert_ne!(paper_case_study(4).noise, a.noise);
    }

    #[test]
    fn noise_covariance_matches_target() {
        let d = paper_case_study(11);
        let cov = numlin::sample_covariance(&d.noise).unwrap();
        let target = d.params_true.static_noise_cov();
        for i in 0..3 {
            let scale = target[(i, i)];
            for j in 0..3 {
                assert!((cov[(i, j)] - target[(i, j)]).abs() < 0.1 * scale, "{cov} vs {target}");
            }
        }
    }
}
