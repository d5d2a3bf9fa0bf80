//! The alternating estimator: latent dynamics with the weights fixed, then
//! loadings and weights with the dynamics fixed, until the oblique projector
//! stops moving.

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::model::{LatentDynamics, PredVarParams, TimeSeries, WeightMatrices};
use crate::numlin::{self, Matrix};

use super::config::FitConfig;
use super::dynamics::{dlv_objective, update_dynamics, DynamicsUpdate};
use super::oblique::{fit_oblique_with, update_loadings, WeightRule};
use super::result::{Algorithm, FitResult, ObjectiveRecord, Scaling};
use super::stacks::{build_stacks, extract_dlvs, StackedData};

/// The ℓ dominant principal directions of `yᵀy/N`.
pub fn init_weights(y: &TimeSeries, ell: usize) -> Result<Matrix> {
    principal_directions(y.data(), ell)
}

pub(crate) fn principal_directions(data: &Matrix, ell: usize) -> Result<Matrix> {
    let p = data.ncols();
    if ell == 0 || ell > p {
        return Err(Error::Config(format!("latent dimension {ell} out of range for p = {p}")));
    }
    let second_moment = numlin::symmetrize(&(data.tr_mul(data) / data.nrows() as f64));
    let svd = numlin::svd_full(&second_moment)?;
    let values = &svd.singular_values;
    let lead = values[p - 1];
    if lead <= 0.0 || values[p - ell] <= numlin::RANK_TOL * lead {
        return Err(Error::Rank(format!("data covariance has fewer than {ell} nonzero directions")));
    }
    numlin::dominant_left_basis(&second_moment, ell)
}

/// Checks dimensions shared by all estimators and returns the scaled data.
pub(crate) fn prepare(y: &TimeSeries, s: usize, ell: usize, config: &FitConfig) -> Result<(Scaling, StackedData)> {
    config.validate()?;
    if s == 0 {
        return Err(Error::Order(0));
    }
    let p = y.dim();
    if ell == 0 || ell >= p {
        return Err(Error::Config(format!("latent dimension must satisfy 1 <= ell < p, got ell={ell}, p={p}")));
    }
    let required = s + (s * ell).max(p) + 1;
    if y.len() < required {
        return Err(Error::InsufficientData { required, actual: y.len() });
    }
    let scaling = if config.standardize { Scaling::standardizing(y) } else { Scaling::identity(p) };
    let z = scaling.apply(y)?;
    let stacks = build_stacks(&z, s)?;
    Ok((scaling, stacks))
}

/// One dynamics update and one loadings update for fixed weights. With
/// `ridge = 0` the returned loadings satisfy `R̂ᵀP̂ = I` and
/// `R̂ᵀΣ̂_eR̂ = Σ̂_ε` exactly, by the normal equations.
pub(crate) fn refit_for_weights(
    stacks: &StackedData,
    weights: &Matrix,
    ridge: f64,
) -> Result<(DynamicsUpdate, Matrix, Matrix)> {
    let latent = extract_dlvs(stacks, weights)?;
    let dynamics = update_dynamics(&latent, ridge)?;
    let loadings = update_loadings(stacks, latent.lagged(), &dynamics.stacked, ridge)?;
    Ok((dynamics, loadings.loadings, loadings.residual_cov))
}

/// Raw pieces of a fit before the static part is completed.
pub(crate) struct Estimate {
    pub algorithm: Algorithm,
    pub loadings: Matrix,
    pub weights: Matrix,
    pub dynamics: DynamicsUpdate,
    pub residual_cov: Matrix,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<ObjectiveRecord>,
    pub scaling: Scaling,
}

/// Fills in `(R̄̂, P̄̂, Σ̂_ε̄)`: `R̄̂` spans the null space of `P̂ᵀ`, `P̄̂` spans
/// the null space of `R̂ᵀ` scaled so `R̄̂ᵀP̄̂ = I`, and `Σ̂_ε̄ = R̄̂ᵀΣ̂_eR̄̂`.
pub(crate) fn complete(est: Estimate) -> Result<FitResult> {
    let (p, ell) = est.loadings.shape();
    let noise_weights = numlin::left_null_basis(&est.loadings, p - ell)?;
    let null_r = numlin::left_null_basis(&est.weights, p - ell)?;
    let cross = noise_weights.tr_mul(&null_r);
    let cross_inv = cross
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularLoadings { rcond: numlin::inverse_condition(&cross) })?;
    let static_loadings = null_r * cross_inv;
    let static_noise_cov = numlin::symmetrize(&(noise_weights.transpose() * &est.residual_cov * &noise_weights));
    let dynamics: LatentDynamics = est.dynamics.into_dynamics();
    let params = PredVarParams::new(est.loadings, static_loadings, Some(dynamics), static_noise_cov)?;
    Ok(FitResult {
        algorithm: est.algorithm,
        params,
        weights: WeightMatrices { signal: est.weights, noise: noise_weights },
        residual_cov: est.residual_cov,
        iterations: est.iterations,
        converged: est.converged,
        objective_trace: est.objective_trace,
        scaling: est.scaling,
    })
}

/// Shared outer loop for the oblique and orthogonal estimators.
pub(crate) fn alternate(
    y: &TimeSeries,
    s: usize,
    ell: usize,
    config: &FitConfig,
    rule: WeightRule,
    algorithm: Algorithm,
) -> Result<FitResult> {
    let (scaling, stacks) = prepare(y, s, ell, config)?;
    let mut weights = principal_directions(stacks.target(), ell)?;
    let mut previous: Option<Matrix> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=config.outer_max_iter {
        iterations = it;
        let latent = extract_dlvs(&stacks, &weights).map_err(|e| e.at(it))?;
        let dynamics = update_dynamics(&latent, config.ridge).map_err(|e| e.at(it))?;
        let dlv = dlv_objective(&latent, &dynamics.stacked, &dynamics.innovation_cov).ok();
        let inner = fit_oblique_with(&stacks, &dynamics.stacked, &weights, config, rule).map_err(|e| e.at(it))?;
        trace.push(ObjectiveRecord { iteration: it, dlv, proj: inner.objective_trace.last().copied().flatten() });
        let projector = inner.projector();
        weights = inner.weights.signal;
        let change = previous.as_ref().map(|prev| numlin::relative_change(&projector, prev));
        debug!("{algorithm} iteration {it}: projector change {change:?}, inner iterations {}", inner.iterations);
        previous = Some(projector);
        if change.is_some_and(|c| c < config.outer_tol) {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("{algorithm} stopped at the iteration cap ({iterations}) without meeting outer_tol");
    }

    let polish = |w: &Matrix| refit_for_weights(&stacks, w, config.ridge).map_err(|e| e.at(iterations + 1));
    let (mut dynamics, mut loadings, mut residual_cov) = polish(&weights)?;
    if rule == WeightRule::Orthogonal {
        // settle on R̂ = P̂(P̂ᵀP̂)⁻¹ with P̂ refit against that R̂
        for _ in 0..config.inner_max_iter {
            let filter = natural_filter(&loadings)?;
            let change = numlin::relative_change(&filter, &weights);
            weights = filter;
            (dynamics, loadings, residual_cov) = polish(&weights)?;
            if change < config.inner_tol {
                break;
            }
        }
    }

    let fit = complete(Estimate {
        algorithm,
        loadings,
        weights,
        dynamics,
        residual_cov,
        iterations,
        converged,
        objective_trace: trace,
        scaling,
    })?;
    if let Ok(res) = fit.identity_residuals() {
        debug!(
            "{algorithm} identities: |RᵀP - I| = {:.3e}, |RᵀΣeR - Σε|/|Σε| = {:.3e}",
            res.dual, res.innovation_relative
        );
    }
    Ok(fit)
}

/// `P̂(P̂ᵀP̂)⁻¹`, so that `v̂ = P̂†y`.
pub(crate) fn natural_filter(loadings: &Matrix) -> Result<Matrix> {
    let gram = loadings.tr_mul(loadings);
    Ok(numlin::solve_spd(&gram, &loadings.transpose(), "loadings Gram P̂ᵀP̂")?.transpose())
}

pub fn fit_predvar(y: &TimeSeries, s: usize, ell: usize, config: &FitConfig) -> Result<FitResult> {
    alternate(y, s, ell, config, WeightRule::Constrained, Algorithm::PredVar)
}
