//! On-disk formats.
//!
//! Time series and tables are CSV with a header row (or a JSON array when
//! `--format json` is chosen); structured parameters are JSON with matrices
//! stored as `{"rows", "cols", "data"}` where `data` is row-major nested
//! arrays. Floats are written in shortest round-trip form, so every file
//! re-parses to the identical values.

use std::fs;
use std::path::{Path, PathBuf};

use predvar::estimate::{Algorithm, FitResult, ObjectiveRecord, Scaling};
use predvar::lorenzgen::SyntheticDataset;
use predvar::model::{LatentDynamics, PredVarParams, TimeSeries, WeightMatrices};
use predvar::numlin::{Matrix, Vector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Config(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<f64>>,
}

impl From<&Matrix> for MatrixJson {
    fn from(m: &Matrix) -> Self {
        let data = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<Matrix> {
        if self.data.len() != self.rows || self.data.iter().any(|r| r.len() != self.cols) {
            return Err(CliError::Config(format!(
                "matrix declares {}x{} but its data does not match",
                self.rows, self.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, self.cols, |i, j| self.data[i][j]))
    }
}

/// A time series stored as JSON, with the same column names as the CSV
/// header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SeriesJson {
    columns: Vec<String>,
    #[serde(flatten)]
    values: MatrixJson,
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::format(path, e.line() as u64, e.column() as u64, e.to_string()))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    let column = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.field().map_or(0, |f| f + 1),
        _ => 0,
    };
    CliError::format(path, line, column, e.to_string())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    create_parent(path)?;
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn flush(path: &Path, mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes `<dir>/<stem>.<ext>` with columns `<prefix>1..<prefix>n`.
pub fn write_series(dir: &Path, stem: &str, format: Format, prefix: &str, m: &Matrix) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let columns: Vec<String> = (1..=m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    match format {
        Format::Json => write_json(&path, &SeriesJson { columns, values: m.into() })?,
        Format::Csv => {
            let mut w = csv_writer(&path)?;
            w.write_record(&columns).map_err(|e| csv_error(&path, e))?;
            for row in m.row_iter() {
                w.write_record(row.iter().map(|x| x.to_string())).map_err(|e| csv_error(&path, e))?;
            }
            flush(&path, w)?;
        }
    }
    Ok(path)
}

pub fn read_series(path: &Path) -> Result<Matrix> {
    if has_extension(path, "json") {
        return read_json::<SeriesJson>(path)?.values.to_matrix();
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let cols = reader.headers().map_err(|e| csv_error(path, e))?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols {
            return Err(CliError::format(path, line, 0, format!("expected {cols} fields, found {}", record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| CliError::format(path, line, j as u64 + 1, format!("'{field}' is not a number")))?;
            values.push(x);
        }
        rows += 1;
    }
    Ok(Matrix::from_row_slice(rows, cols, &values))
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Writes serializable rows as `<dir>/<stem>.<ext>`.
pub fn write_table<T: Serialize>(dir: &Path, stem: &str, format: Format, rows: &[T]) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        Format::Json => write_json(&path, &rows)?,
        Format::Csv => {
            let mut w = csv_writer(&path)?;
            for row in rows {
                w.serialize(row).map_err(|e| csv_error(&path, e))?;
            }
            flush(&path, w)?;
        }
    }
    Ok(path)
}

pub fn read_table<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if has_extension(path, "json") {
        return read_json(path);
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader.deserialize().map(|r| r.map_err(|e| csv_error(path, e))).collect()
}

/// `<dir>/<stem>.csv`, falling back to `<dir>/<stem>.json`.
pub fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    for format in [Format::Csv, Format::Json] {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        if path.is_file() {
            return Ok(path);
        }
    }
    Err(CliError::io(
        dir.join(format!("{stem}.csv")),
        std::io::Error::new(std::io::ErrorKind::NotFound, "no CSV or JSON file found"),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsJson {
    pub coeffs: Vec<MatrixJson>,
    pub innovation_cov: MatrixJson,
}

impl From<&LatentDynamics> for DynamicsJson {
    fn from(d: &LatentDynamics) -> Self {
        Self { coeffs: d.coeffs.iter().map(Into::into).collect(), innovation_cov: (&d.innovation_cov).into() }
    }
}

impl DynamicsJson {
    pub fn to_dynamics(&self) -> Result<LatentDynamics> {
        Ok(LatentDynamics {
            coeffs: self.coeffs.iter().map(MatrixJson::to_matrix).collect::<Result<_>>()?,
            innovation_cov: self.innovation_cov.to_matrix()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzJson {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    pub dt: f64,
    pub initial_state: [f64; 3],
    pub integrator: String,
    pub discard: usize,
    pub center: bool,
    pub noise_variance: String,
}

/// Ground truth and provenance of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    /// `paper`, `orth` or `simulate`.
    pub case: String,
    pub seed: u64,
    pub samples: usize,
    pub loadings: MatrixJson,
    pub static_loadings: MatrixJson,
    pub static_noise_cov: MatrixJson,
    pub dynamics: Option<DynamicsJson>,
    pub train_range: [usize; 2],
    pub test_range: [usize; 2],
    pub lorenz: Option<LorenzJson>,
    pub burn_in: Option<usize>,
}

impl TruthFile {
    pub fn params(&self) -> Result<PredVarParams> {
        let dynamics = self.dynamics.as_ref().map(DynamicsJson::to_dynamics).transpose()?;
        Ok(PredVarParams::new(
            self.loadings.to_matrix()?,
            self.static_loadings.to_matrix()?,
            dynamics,
            self.static_noise_cov.to_matrix()?,
        )?)
    }
}

pub fn truth_file(data: &SyntheticDataset, case: &str, lorenz: Option<LorenzJson>, burn_in: Option<usize>) -> TruthFile {
    let params = &data.params_true;
    TruthFile {
        case: case.to_string(),
        seed: data.seed,
        samples: data.len(),
        loadings: params.loadings().into(),
        static_loadings: params.static_loadings().into(),
        static_noise_cov: params.static_noise_cov().into(),
        dynamics: params.dynamics().map(Into::into),
        train_range: [data.train_range.start, data.train_range.end],
        test_range: [data.test_range.start, data.test_range.end],
        lorenz,
        burn_in,
    }
}

/// Reads `y`, `v_true` and `truth.json` from a dataset directory.
pub fn read_dataset(dir: &Path) -> Result<SyntheticDataset> {
    let truth: TruthFile = read_json(&dir.join("truth.json"))?;
    let y = TimeSeries::new(read_series(&locate(dir, "y")?)?)?;
    let v = TimeSeries::new(read_series(&locate(dir, "v_true")?)?)?;
    let [a, b] = truth.train_range;
    let [c, d] = truth.test_range;
    Ok(SyntheticDataset::from_parts(y, v, truth.params()?, a..b, c..d, truth.seed)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveJson {
    pub iteration: usize,
    pub dlv: Option<f64>,
    pub proj: Option<f64>,
}

impl From<&ObjectiveRecord> for ObjectiveJson {
    fn from(r: &ObjectiveRecord) -> Self {
        Self { iteration: r.iteration, dlv: r.dlv, proj: r.proj }
    }
}

/// Every field of a fit. Matrices are in the standardized frame described
/// by `scaling_mean` and `scaling_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub algorithm: String,
    pub loadings: MatrixJson,
    pub static_loadings: MatrixJson,
    pub static_noise_cov: MatrixJson,
    pub dynamics: DynamicsJson,
    pub weights: MatrixJson,
    pub noise_weights: MatrixJson,
    pub residual_cov: MatrixJson,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<ObjectiveJson>,
    pub scaling_mean: Vec<f64>,
    pub scaling_scale: Vec<f64>,
}

impl ModelFile {
    pub fn from_fit(fit: &FitResult) -> Result<Self> {
        let params = &fit.params;
        Ok(Self {
            algorithm: fit.algorithm.name().to_string(),
            loadings: params.loadings().into(),
            static_loadings: params.static_loadings().into(),
            static_noise_cov: params.static_noise_cov().into(),
            dynamics: fit.dynamics()?.into(),
            weights: (&fit.weights.signal).into(),
            noise_weights: (&fit.weights.noise).into(),
            residual_cov: (&fit.residual_cov).into(),
            iterations: fit.iterations,
            converged: fit.converged,
            objective_trace: fit.objective_trace.iter().map(Into::into).collect(),
            scaling_mean: fit.scaling.mean.iter().copied().collect(),
            scaling_scale: fit.scaling.scale.iter().copied().collect(),
        })
    }

    pub fn to_fit(&self) -> Result<FitResult> {
        let algorithm: Algorithm = self.algorithm.parse()?;
        let params = PredVarParams::new(
            self.loadings.to_matrix()?,
            self.static_loadings.to_matrix()?,
            Some(self.dynamics.to_dynamics()?),
            self.static_noise_cov.to_matrix()?,
        )?;
        if self.scaling_mean.len() != params.p() || self.scaling_scale.len() != params.p() {
            return Err(CliError::Config("scaling vectors do not match the number of sensors".into()));
        }
        Ok(FitResult {
            algorithm,
            params,
            weights: WeightMatrices { signal: self.weights.to_matrix()?, noise: self.noise_weights.to_matrix()? },
            residual_cov: self.residual_cov.to_matrix()?,
            iterations: self.iterations,
            converged: self.converged,
            objective_trace: self
                .objective_trace
                .iter()
                .map(|o| ObjectiveRecord { iteration: o.iteration, dlv: o.dlv, proj: o.proj })
                .collect(),
            scaling: Scaling {
                mean: Vector::from_vec(self.scaling_mean.clone()),
                scale: Vector::from_vec(self.scaling_scale.clone()),
            },
        })
    }

    /// The fitted model expressed for raw measurements, ready to simulate.
    pub fn original_params(&self) -> Result<PredVarParams> {
        let fit = self.to_fit()?;
        let d = Matrix::from_diagonal(&fit.scaling.scale);
        Ok(PredVarParams::new(
            fit.loadings_original(),
            &d * fit.params.static_loadings(),
            fit.params.dynamics().cloned(),
            fit.params.static_noise_cov().clone(),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsFile {
    pub algorithm: String,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<ObjectiveJson>,
    /// `‖R̂ᵀP̂ − I‖_F`.
    pub dual_residual: f64,
    /// `‖R̂ᵀΣ̂_eR̂ − Σ̂_ε‖_F`.
    pub innovation_residual: f64,
    pub innovation_residual_relative: f64,
    /// `‖R̂ᵀΣ̂_eR̄̂‖_F / ‖Σ̂_e‖_F`.
    pub constraint_residual_relative: f64,
    /// Why the fit failed its consistency checks, if it did.
    pub validation_error: Option<String>,
}

impl DiagnosticsFile {
    pub fn from_fit(fit: &FitResult) -> Result<Self> {
        let res = fit.identity_residuals()?;
        Ok(Self {
            algorithm: fit.algorithm.name().to_string(),
            iterations: fit.iterations,
            converged: fit.converged,
            objective_trace: fit.objective_trace.iter().map(Into::into).collect(),
            dual_residual: res.dual,
            innovation_residual: res.innovation,
            innovation_residual_relative: res.innovation_relative,
            constraint_residual_relative: res.constraint_relative,
            validation_error: fit.validate().err().map(|e| e.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitJson {
    pub split: String,
    pub meas_recon: MatrixJson,
    pub meas_pred: MatrixJson,
    pub sig_recon: MatrixJson,
    pub sig_pred: MatrixJson,
    pub truth: MatrixJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub algorithm: String,
    pub projector_distance: f64,
    pub signal_angle_deg: f64,
    pub signal_angle_max_deg: f64,
    pub em_sig_pred_cov: MatrixJson,
    pub splits: Vec<SplitJson>,
}

impl From<&predvar::metrics::EvalReport> for ReportFile {
    fn from(r: &predvar::metrics::EvalReport) -> Self {
        Self {
            algorithm: r.algorithm.name().to_string(),
            projector_distance: r.projector_distance,
            signal_angle_deg: r.signal_angle_deg,
            signal_angle_max_deg: r.signal_angle_max_deg,
            em_sig_pred_cov: (&r.em_sig_pred_cov).into(),
            splits: r
                .splits
                .iter()
                .map(|s| SplitJson {
                    split: s.split.name().to_string(),
                    meas_recon: (&s.covariances.meas_recon).into(),
                    meas_pred: (&s.covariances.meas_pred).into(),
                    sig_recon: (&s.covariances.sig_recon).into(),
                    sig_pred: (&s.covariances.sig_pred).into(),
                    truth: (&s.truth_cov).into(),
                })
                .collect(),
        }
    }
}

/// One entry of `fig_covariances`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEntry {
    pub figure: String,
    pub split: String,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// One entry of `sensor_traces`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub sample: usize,
    pub series: String,
    pub value: f64,
}

/// One row of `sweep`; the metric fields are empty and `error` is set when
/// the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub samples: usize,
    pub algorithm: String,
    pub seed: u64,
    pub projector_distance: Option<f64>,
    pub signal_angle_deg: Option<f64>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}
