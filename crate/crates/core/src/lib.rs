//! Estimation of dynamic latent variable models with an oblique split
//! between a low-dimensional predictable signal and static noise.
//!
//! Measurements follow `y_k = P v_k + P̄ ε̄_k`, where the latent `v_k` is a
//! VAR(s) process and `ε̄_k` is serially independent noise. The crate
//! provides the model, the alternating estimator, two baselines, a Lorenz
//! test-bed and the evaluation metrics.

pub mod baselines;
pub mod error;
pub mod estimate;
pub mod lorenzgen;
pub mod metrics;
pub mod model;
pub mod numlin;

pub use error::{Error, Result};
pub use estimate::{fit_predvar, Algorithm, FitConfig, FitResult};
pub use model::{PredVarParams, TimeSeries, WeightMatrices};
pub use numlin::Matrix;
