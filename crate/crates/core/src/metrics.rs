//! Evaluation of fitted models against synthetic ground truth.
//!
//! Predictions on a split use only that split's samples as history, so the
//! first `s` samples of each split are consumed and every reported series or
//! covariance covers rows `s..len` of the split.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimate::{update_dynamics, Algorithm, FitConfig, FitResult, LatentStacks};
use crate::baselines::fit_with;
use crate::lorenzgen::SyntheticDataset;
use crate::model::TimeSeries;
use crate::numlin::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub const BOTH: [Split; 2] = [Split::Train, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn split_data(dataset: &SyntheticDataset, split: Split) -> Result<(TimeSeries, TimeSeries)> {
    let range = match split {
        Split::Train => dataset.train_range.clone(),
        Split::Test => dataset.test_range.clone(),
    };
    Ok((dataset.y.slice(range.clone())?, dataset.v_true.slice(range)?))
}

fn check_fit(dataset: &SyntheticDataset, fit: &FitResult) -> Result<()> {
    if fit.p() != dataset.y.dim() || fit.ell() != dataset.v_true.dim() {
        return Err(Error::Dimension(format!(
            "fit is {}x{} but data has p = {}, ℓ = {}",
            fit.p(),
            fit.ell(),
            dataset.y.dim(),
            dataset.v_true.dim()
        )));
    }
    Ok(())
}

/// Aligned per-sample quantities on one split, rows `s..len`.
struct Aligned {
    measured: Matrix,
    true_signal: Matrix,
    reconstructed: Matrix,
    predicted: Matrix,
}

fn aligned(dataset: &SyntheticDataset, fit: &FitResult, split: Split) -> Result<Aligned> {
    check_fit(dataset, fit)?;
    let s = fit.order();
    let (y, v) = split_data(dataset, split)?;
    if y.len() < s + 2 {
        return Err(Error::InsufficientData { required: s + 2, actual: y.len() });
    }
    let n = y.len() - s;
    let true_signal = v.data().rows(s, n) * dataset.params_true.loadings().transpose();
    let reconstructed = fit.reconstruct_signal(&y)?.rows(s, n).into_owned();
    let predicted = fit.predict_signal(&y)?;
    Ok(Aligned { measured: y.data().rows(s, n).into_owned(), true_signal, reconstructed, predicted })
}

/// The four residual covariances, in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCovariances {
    /// `y_k − Π̂ y_k`.
    pub meas_recon: Matrix,
    /// `y_k − P̂ ṽ̂_k`.
    pub meas_pred: Matrix,
    /// `P̂ v̂_k − P v_k`.
    pub sig_recon: Matrix,
    /// `P̂ ṽ̂_k − P v_k`.
    pub sig_pred: Matrix,
}

pub fn residual_covariances(dataset: &SyntheticDataset, fit: &FitResult, split: Split) -> Result<ResidualCovariances> {
    let a = aligned(dataset, fit, split)?;
    Ok(ResidualCovariances {
        meas_recon: numlin::covariance_of_rows(&(&a.measured - &a.reconstructed))?,
        meas_pred: numlin::covariance_of_rows(&(&a.measured - &a.predicted))?,
        sig_recon: numlin::covariance_of_rows(&(&a.reconstructed - &a.true_signal))?,
        sig_pred: numlin::covariance_of_rows(&(&a.predicted - &a.true_signal))?,
    })
}

/// Covariance of `y_k − P v_k = P̄ ε̄_k` over rows `s..len` of the split.
pub fn truth_reference_cov(dataset: &SyntheticDataset, split: Split, s: usize) -> Result<Matrix> {
    let (y, v) = split_data(dataset, split)?;
    if y.len() < s + 2 {
        return Err(Error::InsufficientData { required: s + 2, actual: y.len() });
    }
    let n = y.len() - s;
    let resid = y.data().rows(s, n) - v.data().rows(s, n) * dataset.params_true.loadings().transpose();
    numlin::covariance_of_rows(&resid)
}

/// `P̂ Σ̂_ε P̂ᵀ` in original units.
pub fn em_signal_prediction_cov(fit: &FitResult) -> Result<Matrix> {
    fit.em_signal_prediction_cov()
}

/// `‖P Rᵀ − P̂ R̂ᵀ‖_F` in original units.
pub fn projector_distance(dataset: &SyntheticDataset, fit: &FitResult) -> Result<f64> {
    check_fit(dataset, fit)?;
    numlin::frobenius_distance(&dataset.true_projector()?, &fit.projector_original())
}

fn signal_angles(dataset: &SyntheticDataset, fit: &FitResult) -> Result<Vec<f64>> {
    check_fit(dataset, fit)?;
    numlin::canonical_angles(dataset.params_true.loadings(), &fit.loadings_original())
}

/// Mean canonical angle between `span(P)` and `span(P̂)`, in degrees.
pub fn signal_subspace_angle(dataset: &SyntheticDataset, fit: &FitResult) -> Result<f64> {
    let angles = signal_angles(dataset, fit)?;
    Ok(angles.iter().sum::<f64>() / angles.len() as f64)
}

/// Largest canonical angle between `span(P)` and `span(P̂)`, in degrees.
pub fn signal_subspace_max_angle(dataset: &SyntheticDataset, fit: &FitResult) -> Result<f64> {
    Ok(signal_angles(dataset, fit)?.into_iter().fold(0.0, f64::max))
}

/// The five curves plotted for one sensor, aligned to `samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTraces {
    pub sensor: usize,
    /// Absolute sample indices in the dataset.
    pub samples: Vec<usize>,
    pub true_signal: Vec<f64>,
    pub reconstructed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub recon_error: Vec<f64>,
    pub pred_error: Vec<f64>,
}

impl SensorTraces {
    pub const SERIES: [&'static str; 5] = ["true_signal", "reconstructed", "predicted", "recon_error", "pred_error"];

    pub fn series(&self) -> [(&'static str, &[f64]); 5] {
        [
            (Self::SERIES[0], &self.true_signal),
            (Self::SERIES[1], &self.reconstructed),
            (Self::SERIES[2], &self.predicted),
            (Self::SERIES[3], &self.recon_error),
            (Self::SERIES[4], &self.pred_error),
        ]
    }
}

/// Traces for a zero-based sensor index.
pub fn sensor_traces(dataset: &SyntheticDataset, fit: &FitResult, sensor: usize, split: Split) -> Result<SensorTraces> {
    let p = dataset.y.dim();
    if sensor >= p {
        return Err(Error::Index { index: sensor, len: p });
    }
    let a = aligned(dataset, fit, split)?;
    let start = match split {
        Split::Train => dataset.train_range.start,
        Split::Test => dataset.test_range.start,
    } + fit.order();
    let col = |m: &Matrix| m.column(sensor).iter().copied().collect::<Vec<f64>>();
    let true_signal = col(&a.true_signal);
    let reconstructed = col(&a.reconstructed);
    let predicted = col(&a.predicted);
    let recon_error = reconstructed.iter().zip(&true_signal).map(|(r, t)| r - t).collect();
    let pred_error = predicted.iter().zip(&true_signal).map(|(r, t)| r - t).collect();
    Ok(SensorTraces {
        sensor,
        samples: (start..start + true_signal.len()).collect(),
        true_signal,
        reconstructed,
        predicted,
        recon_error,
        pred_error,
    })
}

/// Ground truth wrapped as a fit. When the true parameters carry no
/// dynamics, the latent VAR(s) is fit by least squares to the true latent
/// training samples.
pub fn truth_fit(dataset: &SyntheticDataset, s: usize) -> Result<FitResult> {
    let params = dataset.params_true.clone();
    if params.dynamics().is_some() {
        return FitResult::from_truth(params);
    }
    let v_train = dataset.v_true.slice(dataset.train_range.clone())?;
    let latent = LatentStacks::from_latent(&v_train, s)?;
    let dynamics = update_dynamics(&latent, 0.0)?.into_dynamics();
    FitResult::from_truth(params.with_dynamics(dynamics)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub split: Split,
    pub covariances: ResidualCovariances,
    /// Covariance of `P̄ ε̄_k` on the same rows.
    pub truth_cov: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub algorithm: Algorithm,
    pub splits: Vec<SplitReport>,
    pub em_sig_pred_cov: Matrix,
    pub projector_distance: f64,
    pub signal_angle_deg: f64,
    pub signal_angle_max_deg: f64,
}

pub fn evaluate(dataset: &SyntheticDataset, fit: &FitResult) -> Result<EvalReport> {
    let splits = Split::BOTH
        .iter()
        .map(|&split| {
            Ok(SplitReport {
                split,
                covariances: residual_covariances(dataset, fit, split)?,
                truth_cov: truth_reference_cov(dataset, split, fit.order())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        algorithm: fit.algorithm,
        splits,
        em_sig_pred_cov: em_signal_prediction_cov(fit)?,
        projector_distance: projector_distance(dataset, fit)?,
        signal_angle_deg: signal_subspace_angle(dataset, fit)?,
        signal_angle_max_deg: signal_subspace_max_angle(dataset, fit)?,
    })
}

/// Grid of a consistency sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub counts: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    /// One dataset is generated per seed.
    pub seeds: Vec<u64>,
    pub order: usize,
    pub ell: usize,
    pub config: FitConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMetrics {
    pub projector_distance: f64,
    pub signal_angle_deg: f64,
    pub signal_angle_max_deg: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub samples: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Metrics, or the label and message of the error that stopped the cell.
    pub outcome: std::result::Result<CellMetrics, (String, String)>,
}

fn failure(e: &Error) -> (String, String) {
    (e.label().to_string(), e.to_string())
}

fn run_cell(dataset: &SyntheticDataset, samples: usize, algorithm: Algorithm, spec: &SweepSpec) -> Result<CellMetrics> {
    let y = dataset.y.head(samples)?;
    let fit = fit_with(algorithm, &y, spec.order, spec.ell, &spec.config)?;
    Ok(CellMetrics {
        projector_distance: projector_distance(dataset, &fit)?,
        signal_angle_deg: signal_subspace_angle(dataset, &fit)?,
        signal_angle_max_deg: signal_subspace_max_angle(dataset, &fit)?,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// Fits every algorithm on the first `x` samples of each seed's dataset for
/// every count `x`. Cells run in parallel on the current rayon pool; rows
/// come back ordered by (seed, count, algorithm) as listed in `spec`.
pub fn consistency_sweep<F>(factory: F, spec: &SweepSpec) -> Result<Vec<SweepRow>>
where
    F: Fn(u64) -> Result<SyntheticDataset> + Sync,
{
    if spec.counts.is_empty() || spec.algorithms.is_empty() || spec.seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one count, algorithm and seed".into()));
    }
    spec.config.validate()?;
    let datasets: Vec<Result<SyntheticDataset>> = spec.seeds.par_iter().map(|&seed| factory(seed)).collect();
    let cells: Vec<(usize, usize, Algorithm)> = (0..spec.seeds.len())
        .flat_map(|i| spec.counts.iter().flat_map(move |&x| spec.algorithms.iter().map(move |&a| (i, x, a))))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(i, samples, algorithm)| {
            let outcome = match &datasets[i] {
                Ok(data) => run_cell(data, samples, algorithm, spec).map_err(|e| failure(&e)),
                Err(e) => Err(failure(e)),
            };
            SweepRow { samples, algorithm, seed: spec.seeds[i], outcome }
        })
        .collect())
}

/// Median of the finite values, `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Median of a metric over the successful rows of one (count, algorithm)
/// cell.
pub fn sweep_median(rows: &[SweepRow], samples: usize, algorithm: Algorithm, metric: fn(&CellMetrics) -> f64) -> Option<f64> {
    let values: Vec<f64> = rows
        .iter()
        .filter(|r| r.samples == samples && r.algorithm == algorithm)
        .filter_map(|r| r.outcome.as_ref().ok().map(metric))
        .collect();
    median(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LatentDynamics, PredVarParams};
    use crate::lorenzgen::simulated_dataset;

    fn dataset(noise: f64) -> SyntheticDataset {
        let p = Matrix::from_row_slice(4, 2, &[1.0, 0.0, 0.4, 1.0, 0.0, 0.5, 0.3, 0.2]);
        let pb = Matrix::from_row_slice(4, 2, &[0.0, 0.1, 0.2, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let dyn_ = LatentDynamics {
            coeffs: vec![Matrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.4])],
            innovation_cov: Matrix::identity(2, 2),
        };
        let params = PredVarParams::new(p, pb, Some(dyn_), Matrix::identity(2, 2) * noise).unwrap();
        simulated_dataset(&params, 200, 5).unwrap()
    }

    #[test]
    fn truth_on_noiseless_data_is_exact() {
        let d = dataset(0.0);
        let fit = truth_fit(&d, 1).unwrap();
        let covs = residual_covariances(&d, &fit, Split::Test).unwrap();
        assert!(covs.sig_recon.amax() < 1e-12);
        assert!(covs.meas_recon.amax() < 1e-12);
        let tr = sensor_traces(&d, &fit, 1, Split::Train).unwrap();
        assert!(tr.recon_error.iter().all(|e| e.abs() < 1e-12));
        assert_eq!(tr.samples.len(), d.train_range.len() - 1);
        assert_eq!(projector_distance(&d, &fit).unwrap(), 0.0);
        assert!(signal_subspace_angle(&d, &fit).unwrap() < 1e-6);
    }

    #[test]
    fn sensor_index_checked() {
        let d = dataset(0.0);
        let fit = truth_fit(&d, 1).unwrap();
        assert!(matches!(sensor_traces(&d, &fit, 4, Split::Test), Err(Error::Index { index: 4, len: 4 })));
    }

    #[test]
    fn em_covariance_examples() {
        let d = dataset(0.0);
        let mut fit = truth_fit(&d, 1).unwrap();
        let with_zero = {
            let mut dyn_ = fit.dynamics().unwrap().clone();
            dyn_.innovation_cov = Matrix::zeros(2, 2);
            fit.params.clone().with_dynamics(dyn_).unwrap()
        };
        fit.params = with_zero;
        assert_eq!(em_signal_prediction_cov(&fit).unwrap(), Matrix::zeros(4, 4));
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN]), None);
    }

    #[test]
    fn sweep_shape_and_failures() {
        let spec = SweepSpec {
            counts: vec![300, 10_000],
            algorithms: vec![Algorithm::PredVar],
            seeds: vec![1, 2],
            order: 1,
            ell: 2,
            config: FitConfig::default(),
        };
        let rows = consistency_sweep(|seed| simulated_dataset(&dataset(0.1).params_true, 400, seed), &spec).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!((rows[0].seed, rows[0].samples), (1, 300));
        assert!(rows[0].outcome.is_ok(), "{:?}", rows[0].outcome);
        // more samples than the dataset holds
        assert!(rows[1].outcome.is_err());
    }
}
