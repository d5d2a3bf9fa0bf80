//! Command-line and config-file options, merged into an [`ExperimentConfig`].
//!
//! Flags win over the JSON config file, which wins over the defaults. The
//! config file uses the flag names as keys (`"latent-dim": 3`).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use predvar::estimate::{Algorithm, FitConfig};
use serde::{Deserialize, Deserializer};

use crate::error::{CliError, Result};
use crate::files::{read_json, Format};

#[derive(Debug, Parser)]
#[command(name = "predvar", version, about = "Reduced-dimensional VAR estimation with oblique projections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset: y, v_true and truth.json.
    Generate(Options),
    /// Fit one estimator and write model.json and diagnostics.json.
    Fit(Options),
    /// Score a fitted model (or the truth) against a dataset.
    Evaluate(Options),
    /// Projector distance and subspace angle over sample counts and seeds.
    Sweep(Options),
}

impl Command {
    pub fn options(&self) -> &Options {
        match self {
            Command::Generate(o) | Command::Fit(o) | Command::Evaluate(o) | Command::Sweep(o) => o,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Fit(_) => "fit",
            Command::Evaluate(_) => "evaluate",
            Command::Sweep(_) => "sweep",
        }
    }
}

/// A list of integers written as `7`, `0,1,2`, `0-9` or a mix such as
/// `1000-3000:1000,5000` (start-end:step).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntList(pub Vec<u64>);

impl FromStr for IntList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let parse = |x: &str| x.trim().parse::<u64>().map_err(|_| format!("'{x}' is not a non-negative integer"));
            match part.split_once('-') {
                None => out.push(parse(part)?),
                Some((start, rest)) => {
                    let (end, step) = match rest.split_once(':') {
                        Some((end, step)) => (parse(end)?, parse(step)?),
                        None => (parse(rest)?, 1),
                    };
                    let start = parse(start)?;
                    if step == 0 || end < start {
                        return Err(format!("'{part}' is not an increasing range"));
                    }
                    out.extend((start..=end).step_by(step as usize));
                }
            }
        }
        if out.is_empty() {
            return Err("the list is empty".into());
        }
        Ok(IntList(out))
    }
}

impl<'de> Deserialize<'de> for IntList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(u64),
            Many(Vec<u64>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::One(x) => Ok(IntList(vec![x])),
            Raw::Many(v) if !v.is_empty() => Ok(IntList(v)),
            Raw::Many(_) => Err(serde::de::Error::custom("the list is empty")),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Options shared by every subcommand; each command reads the ones it
/// needs.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Options {
    /// Dataset to generate or sweep: paper, orth or simulate (needs --model).
    #[arg(long)]
    pub case: Option<String>,
    /// Dataset directory (y.csv, v_true.csv, truth.json) or, for fit, a bare
    /// series file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// model.json to evaluate, or to simulate from with --case simulate.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// predvar, oneshot, orth, truth (evaluate only) or all (sweep only).
    #[arg(long)]
    pub algo: Option<String>,
    /// VAR order s of the latent dynamics.
    #[arg(long)]
    pub order: Option<usize>,
    /// Number of dynamic latent variables ℓ.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Seed, seed list or range, e.g. 7, 0,1,2 or 0-9.
    #[arg(long)]
    pub seed: Option<IntList>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or json for series and tables.
    #[arg(long)]
    pub format: Option<String>,
    /// Worker threads for sweep.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// JSON file with defaults for any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Samples to generate, or the leading samples to fit on.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sweep sample counts, e.g. 1000-10000:1000.
    #[arg(long)]
    pub counts: Option<IntList>,
    /// Zero-based sensor index for sensor_traces.
    #[arg(long)]
    pub sensor: Option<usize>,
    /// Stop when the projector's relative change falls below this.
    #[arg(long)]
    pub outer_tol: Option<f64>,
    /// Cap on outer iterations.
    #[arg(long)]
    pub outer_max_iter: Option<usize>,
    /// Convergence threshold of the weight/loading inner loop.
    #[arg(long)]
    pub inner_tol: Option<f64>,
    /// Cap on inner iterations.
    #[arg(long)]
    pub inner_max_iter: Option<usize>,
    /// Ridge added to Gram matrices before inversion.
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Standardize each channel before fitting (true or false).
    #[arg(long)]
    pub standardize: Option<bool>,
}

impl Options {
    /// Fills every unset field from `fallback`.
    pub fn or(self, fallback: Options) -> Options {
        Options {
            case: self.case.or(fallback.case),
            data: self.data.or(fallback.data),
            model: self.model.or(fallback.model),
            algo: self.algo.or(fallback.algo),
            order: self.order.or(fallback.order),
            latent_dim: self.latent_dim.or(fallback.latent_dim),
            seed: self.seed.or(fallback.seed),
            out: self.out.or(fallback.out),
            format: self.format.or(fallback.format),
            jobs: self.jobs.or(fallback.jobs),
            config: self.config,
            samples: self.samples.or(fallback.samples),
            counts: self.counts.or(fallback.counts),
            sensor: self.sensor.or(fallback.sensor),
            outer_tol: self.outer_tol.or(fallback.outer_tol),
            outer_max_iter: self.outer_max_iter.or(fallback.outer_max_iter),
            inner_tol: self.inner_tol.or(fallback.inner_tol),
            inner_max_iter: self.inner_max_iter.or(fallback.inner_max_iter),
            ridge: self.ridge.or(fallback.ridge),
            standardize: self.standardize.or(fallback.standardize),
        }
    }

    /// Merges in the config file named by `--config`, if any.
    pub fn with_config_file(self) -> Result<Options> {
        match &self.config {
            Some(path) => {
                let file: Options = read_json(path)?;
                Ok(self.or(file))
            }
            None => Ok(self),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Paper,
    Orth,
    /// Simulate from a model file.
    Simulate(PathBuf),
    /// An existing dataset directory or series file.
    Files(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: Source,
    pub algorithms: Vec<Algorithm>,
    pub order: usize,
    pub ell: usize,
    pub fit: FitConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub format: Format,
    pub jobs: usize,
    pub samples: Option<usize>,
    pub counts: Vec<usize>,
    pub sensor: usize,
    pub model: Option<PathBuf>,
}

pub const DEFAULT_ORDER: usize = 2;
pub const DEFAULT_LATENT_DIM: usize = 3;

fn parse_algorithms(text: &str) -> Result<Vec<Algorithm>> {
    if text.eq_ignore_ascii_case("all") {
        return Ok(Algorithm::ESTIMATORS.to_vec());
    }
    text.split(',').map(|a| a.trim().parse::<Algorithm>().map_err(|e| CliError::Config(e.to_string()))).collect()
}

impl ExperimentConfig {
    /// Resolves merged options for `command`, applying defaults and
    /// checking what can be checked before any data is read.
    pub fn resolve(command: &str, o: &Options) -> Result<Self> {
        let source = match (&o.data, o.case.as_deref()) {
            (Some(path), None) => Source::Files(path.clone()),
            (Some(_), Some(_)) => return Err(CliError::Config("--data and --case are mutually exclusive".into())),
            (None, None | Some("paper")) => Source::Paper,
            (None, Some("orth")) => Source::Orth,
            (None, Some("simulate")) => Source::Simulate(
                o.model.clone().ok_or_else(|| CliError::Config("--case simulate needs --model".into()))?,
            ),
            (None, Some(other)) => {
                return Err(CliError::Config(format!("unknown case '{other}' (expected paper, orth or simulate)")));
            }
        };
        let default_algo = if command == "sweep" { "all" } else { "predvar" };
        let algorithms = parse_algorithms(o.algo.as_deref().unwrap_or(default_algo))?;
        let order = o.order.unwrap_or(DEFAULT_ORDER);
        if order == 0 {
            return Err(CliError::Config("--order must be at least 1".into()));
        }
        let ell = o.latent_dim.unwrap_or(DEFAULT_LATENT_DIM);
        if ell == 0 {
            return Err(CliError::Config("--latent-dim must be at least 1".into()));
        }
        let defaults = FitConfig::default();
        let fit = FitConfig {
            outer_tol: o.outer_tol.unwrap_or(defaults.outer_tol),
            outer_max_iter: o.outer_max_iter.unwrap_or(defaults.outer_max_iter),
            inner_tol: o.inner_tol.unwrap_or(defaults.inner_tol),
            inner_max_iter: o.inner_max_iter.unwrap_or(defaults.inner_max_iter),
            ridge: o.ridge.unwrap_or(defaults.ridge),
            standardize: o.standardize.unwrap_or(defaults.standardize),
        };
        fit.validate()?;
        let jobs = o.jobs.unwrap_or(1);
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        let counts: Vec<usize> = match &o.counts {
            Some(list) => list.0.iter().map(|&c| c as usize).collect(),
            None => (1..=10).map(|k| k * 1000).collect(),
        };
        if counts.contains(&0) {
            return Err(CliError::Config("sample counts must be positive".into()));
        }
        if o.samples == Some(0) {
            return Err(CliError::Config("--samples must be positive".into()));
        }
        Ok(Self {
            source,
            algorithms,
            order,
            ell,
            fit,
            seeds: o.seed.clone().map_or(vec![0], |s| s.0),
            out: o.out.clone().unwrap_or_else(|| PathBuf::from(".")),
            format: o.format.as_deref().unwrap_or("csv").parse()?,
            jobs,
            samples: o.samples,
            counts,
            sensor: o.sensor.unwrap_or(1),
            model: o.model.clone(),
        })
    }

    /// The single algorithm of `fit` and `evaluate`.
    pub fn single_algorithm(&self) -> Result<Algorithm> {
        match self.algorithms.as_slice() {
            [one] => Ok(*one),
            _ => Err(CliError::Config("select exactly one algorithm".into())),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seeds[0]
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out_path("model.json"))
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }
}
