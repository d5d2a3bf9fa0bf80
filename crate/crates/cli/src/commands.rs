use std::path::{Path, PathBuf};

use log::{info, warn};
use predvar::baselines::fit_with;
use predvar::estimate::{Algorithm, FitResult};
use predvar::lorenzgen::{case_study, simulated_dataset, CaseKind, Integrator, StudyConfig, SyntheticDataset};
use predvar::metrics::{
    consistency_sweep, evaluate, sensor_traces, sweep_median, truth_fit, EvalReport, Split, SweepSpec,
};
use predvar::model::{PredVarParams, TimeSeries, DEFAULT_BURN_IN};
use predvar::numlin::Matrix;

use crate::config::{Command, ExperimentConfig, Source};
use crate::error::{CliError, Result};
use crate::files::{
    read_dataset, read_json, read_series, truth_file, write_json, write_series, write_table, CovarianceEntry,
    DiagnosticsFile, LorenzJson, ModelFile, ReportFile, SweepEntry, TraceEntry, TruthFile,
};

/// Runs one subcommand and returns the files it wrote.
pub fn run(command: &Command) -> Result<Vec<PathBuf>> {
    let options = command.options().clone().with_config_file()?;
    let cfg = ExperimentConfig::resolve(command.name(), &options)?;
    match command {
        Command::Generate(_) => generate(&cfg),
        Command::Fit(_) => fit(&cfg),
        Command::Evaluate(_) => evaluate_model(&cfg),
        Command::Sweep(_) => sweep(&cfg),
    }
}

fn study_config(samples: Option<usize>) -> Result<StudyConfig> {
    let mut study = StudyConfig::default();
    if let Some(n) = samples {
        let half = (n / 2).min(study.train_len);
        if half == 0 {
            return Err(CliError::Config(format!("--samples {n} is too small to split into train and test")));
        }
        study.samples = n;
        study.train_len = half;
        study.test_len = half;
    }
    Ok(study)
}

fn lorenz_json(study: &StudyConfig) -> LorenzJson {
    let l = &study.lorenz;
    LorenzJson {
        sigma: l.sigma,
        rho: l.rho,
        beta: l.beta,
        dt: l.dt,
        initial_state: l.initial_state,
        integrator: match l.integrator {
            Integrator::Rk4 => "rk4",
            Integrator::Euler => "euler",
        }
        .into(),
        discard: l.discard,
        center: study.center,
        noise_variance: format!("{:?}", study.noise).to_lowercase(),
    }
}

/// Parameters with dynamics from either a model.json or a truth.json.
fn simulation_params(path: &Path) -> Result<PredVarParams> {
    let value: serde_json::Value = read_json(path)?;
    if let Ok(model) = serde_json::from_value::<ModelFile>(value.clone()) {
        return model.original_params();
    }
    let truth: TruthFile = serde_json::from_value(value)
        .map_err(|e| CliError::format(path, 0, 0, format!("neither a model nor a truth file: {e}")))?;
    let params = truth.params()?;
    if params.dynamics().is_none() {
        return Err(CliError::Config(format!("{} carries no latent dynamics to simulate", path.display())));
    }
    Ok(params)
}

fn case_kind(source: &Source) -> Option<(CaseKind, &'static str)> {
    match source {
        Source::Paper => Some((CaseKind::Paper, "paper")),
        Source::Orth => Some((CaseKind::Orth, "orth")),
        _ => None,
    }
}

fn generate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let seed = cfg.seed();
    let (data, truth) = match &cfg.source {
        Source::Paper | Source::Orth => {
            let (kind, name) = case_kind(&cfg.source).expect("Lorenz source");
            let study = study_config(cfg.samples)?;
            let data = case_study(kind, seed, &study)?;
            let truth = truth_file(&data, name, Some(lorenz_json(&study)), None);
            (data, truth)
        }
        Source::Simulate(path) => {
            let params = simulation_params(path)?;
            let data = simulated_dataset(&params, cfg.samples.unwrap_or(10_000), seed)?;
            let truth = truth_file(&data, "simulate", None, Some(DEFAULT_BURN_IN));
            (data, truth)
        }
        Source::Files(_) => return Err(CliError::Config("generate takes --case, not --data".into())),
    };
    info!("generated {} samples of {} sensors (seed {seed})", data.len(), data.y.dim());
    let y = write_series(cfg.out_dir(), "y", cfg.format, "y", data.y.data())?;
    let v = write_series(cfg.out_dir(), "v_true", cfg.format, "v", data.v_true.data())?;
    let t = cfg.out_path("truth.json");
    write_json(&t, &truth)?;
    Ok(vec![y, v, t])
}

/// The series a fit runs on: a bare file in full, or a dataset's training
/// split, or its first `--samples` rows when given.
fn fit_series(cfg: &ExperimentConfig) -> Result<TimeSeries> {
    let Source::Files(path) = &cfg.source else {
        return Err(CliError::Config("fit needs --data".into()));
    };
    let y = if path.is_dir() {
        let data = read_dataset(path)?;
        match cfg.samples {
            Some(n) => data.y.head(n)?,
            None => data.train(),
        }
    } else {
        let y = TimeSeries::new(read_series(path)?)?;
        match cfg.samples {
            Some(n) => y.head(n)?,
            None => y,
        }
    };
    Ok(y)
}

fn fit(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let algorithm = cfg.single_algorithm()?;
    if algorithm == Algorithm::Truth {
        return Err(CliError::Config("truth is not an estimator; use it with evaluate".into()));
    }
    let y = fit_series(cfg)?;
    let result = fit_with(algorithm, &y, cfg.order, cfg.ell, &cfg.fit)?;
    info!("{algorithm}: {} iterations, converged = {}", result.iterations, result.converged);
    let diagnostics = DiagnosticsFile::from_fit(&result)?;
    if let Some(problem) = &diagnostics.validation_error {
        warn!("{algorithm} fit failed its consistency checks: {problem}");
    }
    let model = cfg.out_path("model.json");
    write_json(&model, &ModelFile::from_fit(&result)?)?;
    let diag = cfg.out_path("diagnostics.json");
    write_json(&diag, &diagnostics)?;
    Ok(vec![model, diag])
}

fn dataset(cfg: &ExperimentConfig) -> Result<SyntheticDataset> {
    match &cfg.source {
        Source::Files(dir) if dir.is_dir() => read_dataset(dir),
        _ => Err(CliError::Config("--data must name a dataset directory written by generate".into())),
    }
}

fn covariance_entries(report: &EvalReport) -> Vec<CovarianceEntry> {
    let mut out = Vec::new();
    let mut push = |figure: &str, split: &str, m: &Matrix| {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.push(CovarianceEntry { figure: figure.into(), split: split.into(), row: i, col: j, value: m[(i, j)] });
            }
        }
    };
    for s in &report.splits {
        let c = &s.covariances;
        let split = s.split.name();
        push("meas_recon", split, &c.meas_recon);
        push("meas_pred", split, &c.meas_pred);
        push("sig_recon", split, &c.sig_recon);
        push("sig_pred", split, &c.sig_pred);
        push("truth", split, &s.truth_cov);
    }
    push("em_sig_pred", "all", &report.em_sig_pred_cov);
    out
}

fn evaluate_model(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let data = dataset(cfg)?;
    let fit: FitResult = if cfg.single_algorithm()? == Algorithm::Truth {
        truth_fit(&data, cfg.order)?
    } else {
        read_json::<ModelFile>(&cfg.model_path())?.to_fit()?
    };
    let report = evaluate(&data, &fit)?;
    info!(
        "{}: projector distance {:.4}, mean signal angle {:.3} deg",
        report.algorithm, report.projector_distance, report.signal_angle_deg
    );
    let report_path = cfg.out_path("report.json");
    write_json(&report_path, &ReportFile::from(&report))?;
    let cov = write_table(cfg.out_dir(), "fig_covariances", cfg.format, &covariance_entries(&report))?;
    let traces = sensor_traces(&data, &fit, cfg.sensor, Split::Test)?;
    let entries: Vec<TraceEntry> = traces
        .series()
        .iter()
        .flat_map(|(name, values)| {
            traces.samples.iter().zip(values.iter()).map(move |(&sample, &value)| TraceEntry {
                sample,
                series: (*name).to_string(),
                value,
            })
        })
        .collect();
    let tr = write_table(cfg.out_dir(), "sensor_traces", cfg.format, &entries)?;
    Ok(vec![report_path, cov, tr])
}

fn sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    if cfg.algorithms.contains(&Algorithm::Truth) {
        return Err(CliError::Config("truth is not an estimator; sweep runs predvar, oneshot and orth".into()));
    }
    let max_count = *cfg.counts.iter().max().expect("counts are nonempty");
    let mut spec = SweepSpec {
        counts: cfg.counts.clone(),
        algorithms: cfg.algorithms.clone(),
        seeds: cfg.seeds.clone(),
        order: cfg.order,
        ell: cfg.ell,
        config: cfg.fit.clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", cfg.jobs)))?;
    let rows = match &cfg.source {
        Source::Paper | Source::Orth => {
            let (kind, _) = case_kind(&cfg.source).expect("Lorenz source");
            let study = study_config(Some(cfg.samples.unwrap_or(StudyConfig::default().samples.max(max_count))))?;
            pool.install(|| consistency_sweep(|seed| case_study(kind, seed, &study), &spec))?
        }
        Source::Simulate(path) => {
            let params = simulation_params(path)?;
            let n = cfg.samples.unwrap_or(max_count);
            pool.install(|| consistency_sweep(|seed| simulated_dataset(&params, n, seed), &spec))?
        }
        Source::Files(_) => {
            let data = dataset(cfg)?;
            spec.seeds = vec![data.seed];
            pool.install(|| consistency_sweep(|_| Ok(data.clone()), &spec))?
        }
    };
    for &count in &spec.counts {
        for &algorithm in &spec.algorithms {
            if let Some(d) = sweep_median(&rows, count, algorithm, |m| m.projector_distance) {
                info!("x = {count}, {algorithm}: median projector distance {d:.4}");
            }
        }
    }
    let entries: Vec<SweepEntry> = rows
        .iter()
        .map(|r| {
            let ok = r.outcome.as_ref().ok();
            SweepEntry {
                samples: r.samples,
                algorithm: r.algorithm.name().to_string(),
                seed: r.seed,
                projector_distance: ok.map(|m| m.projector_distance),
                signal_angle_deg: ok.map(|m| m.signal_angle_deg),
                converged: ok.map(|m| m.converged),
                error: r.outcome.as_ref().err().map(|(label, msg)| format!("{label}: {msg}")),
            }
        })
        .collect();
    let path = write_table(cfg.out_dir(), "sweep", cfg.format, &entries)?;
    if let Some(first) = entries.iter().find_map(|e| e.error.clone()).filter(|_| entries.iter().all(|e| e.error.is_some())) {
        return Err(CliError::SweepFailed(first));
    }
    Ok(vec![path])
}
