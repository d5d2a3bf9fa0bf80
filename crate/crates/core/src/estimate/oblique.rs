//! Loadings update and the constrained weight recovery.
//!
//! Given frozen latent dynamics, the loadings are refit by regressing the
//! measurements on the predicted DLVs, `P̂ = Y_sᵀ 𝕍̂𝔹̂ (𝔹̂ᵀ𝕍̂ᵀ𝕍̂𝔹̂)⁻¹`.
//! This differs from the LaVAR-CCA update `P̂ = Y_sᵀ V̂_s (V̂_sᵀ V̂_s)⁻¹`,
//! which regresses on the extracted DLVs and ignores the dynamics.
//!
//! The weights then follow from the decorrelation constraint
//! `R̂ᵀ Σ̂_e R̄̂ = 0`: `R̄̂` spans the null space of `P̂ᵀ`, and `R̂` spans the
//! null space of `(Σ̂_e R̄̂)ᵀ`.

use crate::error::{Error, Result};
use crate::model::WeightMatrices;
use crate::numlin::{self, Matrix};

use super::config::FitConfig;
use super::stacks::{extract_dlvs, StackedData};

/// `P̂` (p x ℓ) and `Σ̂_e` (p x p).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingsUpdate {
    pub loadings: Matrix,
    pub residual_cov: Matrix,
}

/// Rule used to turn refit loadings into new weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRule {
    /// Oblique weights from the decorrelation constraint.
    Constrained,
    /// The orthogonal natural filter `v = P̂† y`.
    Orthogonal,
}

/// Predicted DLVs `𝕍̂𝔹̂` (N x ℓ).
pub(crate) fn predicted_dlvs(lagged: &Matrix, stacked: &Matrix) -> Result<Matrix> {
    if lagged.ncols() != stacked.nrows() {
        return Err(Error::Dimension(format!(
            "lagged DLVs have {} columns but 𝔹 has {} rows",
            lagged.ncols(),
            stacked.nrows()
        )));
    }
    Ok(lagged * stacked)
}

pub fn update_loadings(stacks: &StackedData, lagged: &Matrix, stacked: &Matrix, ridge: f64) -> Result<LoadingsUpdate> {
    let predicted = predicted_dlvs(lagged, stacked)?;
    let mut gram = predicted.tr_mul(&predicted);
    if ridge > 0.0 {
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
    }
    let target = stacks.target();
    let rhs = predicted.tr_mul(target);
    let loadings = numlin::solve_spd(&gram, &rhs, "predicted DLV Gram 𝔹ᵀ𝕍ᵀ𝕍𝔹")?.transpose();
    let resid = target - &predicted * loadings.transpose();
    let residual_cov = numlin::symmetrize(&(resid.tr_mul(&resid) / stacks.samples() as f64));
    Ok(LoadingsUpdate { loadings, residual_cov })
}

/// `N ln|Σ_e| + Σ_k (y_k − P ṽ_k)ᵀ Σ_e⁻¹ (y_k − P ṽ_k)` with `ṽ_k` the rows
/// of `𝕍̂𝔹̂`.
pub fn proj_objective(
    stacks: &StackedData,
    lagged: &Matrix,
    stacked: &Matrix,
    loadings: &Matrix,
    residual_cov: &Matrix,
) -> Result<f64> {
    let predicted = predicted_dlvs(lagged, stacked)?;
    if loadings.shape() != (stacks.dim(), predicted.ncols()) {
        return Err(Error::Dimension(format!("loadings have shape {:?}", loadings.shape())));
    }
    let (logdet, inv) = numlin::logdet_and_inverse(residual_cov, "residual covariance Σ_e")?;
    let resid = stacks.target() - predicted * loadings.transpose();
    let quad = (resid.tr_mul(&resid) * inv).trace();
    Ok(stacks.samples() as f64 * logdet + quad)
}

fn check_full_column_rank(loadings: &Matrix) -> Result<()> {
    let (p, ell) = loadings.shape();
    if ell == 0 || ell >= p {
        return Err(Error::Dimension(format!("loadings must be p x ℓ with 1 <= ℓ < p, got {p}x{ell}")));
    }
    let s = loadings.singular_values();
    if s.max() == 0.0 || s.min() <= numlin::RANK_TOL * s.max() {
        return Err(Error::Rank("loadings are not of full column rank".into()));
    }
    Ok(())
}

/// Weights satisfying `R̄̂ᵀP̂ = 0` and `R̂ᵀΣ̂_eR̄̂ = 0`, both orthonormal.
pub fn constrained_weights(loadings: &Matrix, residual_cov: &Matrix) -> Result<WeightMatrices> {
    check_full_column_rank(loadings)?;
    let (p, ell) = loadings.shape();
    if residual_cov.shape() != (p, p) {
        return Err(Error::Dimension(format!("Σ_e must be {p}x{p}, got {:?}", residual_cov.shape())));
    }
    let noise = numlin::left_null_basis(loadings, p - ell)?;
    let signal = numlin::left_null_basis(&(residual_cov * &noise), ell)?;
    Ok(WeightMatrices { signal, noise })
}

/// Orthogonal-projection weights used inside the alternation: the polar
/// factor of `P̂`, an orthonormal basis of `span(P̂)` in the basis nearest to
/// the current DLV coordinates. Equals `P̂(P̂ᵀP̂)⁻¹` up to a right factor.
pub(crate) fn orthogonal_weights(loadings: &Matrix) -> Result<WeightMatrices> {
    check_full_column_rank(loadings)?;
    let (p, ell) = loadings.shape();
    let svd = loadings.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let signal = u * vt;
    let noise = numlin::left_null_basis(loadings, p - ell)?;
    Ok(WeightMatrices { signal, noise })
}

/// Rotates the orthonormal basis `basis` within its span to the one nearest
/// `target` in Frobenius norm.
pub(crate) fn align_basis(basis: &Matrix, target: &Matrix) -> Matrix {
    let svd = basis.tr_mul(target).svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    basis * (u * vt)
}

/// New weights for the next inner pass, rotated within their span toward
/// `previous` so the frozen VAR keeps acting on the same DLV
/// coordinates.
pub(crate) fn next_weights(rule: WeightRule, update: &LoadingsUpdate, previous: &Matrix) -> Result<WeightMatrices> {
    match rule {
        WeightRule::Constrained => {
            let raw = constrained_weights(&update.loadings, &update.residual_cov)?;
            Ok(WeightMatrices { signal: align_basis(&raw.signal, previous), noise: raw.noise })
        }
        WeightRule::Orthogonal => {
            let raw = orthogonal_weights(&update.loadings)?;
            Ok(WeightMatrices { signal: align_basis(&raw.signal, previous), noise: raw.noise })
        }
    }
}

/// Output of the inner loadings/weights loop.
#[derive(Debug, Clone)]
pub struct ObliqueFit {
    pub loadings: Matrix,
    pub weights: WeightMatrices,
    pub residual_cov: Matrix,
    pub iterations: usize,
    pub converged: bool,
    /// Projection objective after each loadings update (None when Σ̂_e is
    /// singular).
    pub objective_trace: Vec<Option<f64>>,
}

impl ObliqueFit {
    pub fn projector(&self) -> Matrix {
        &self.loadings * self.weights.signal.transpose()
    }
}

/// Alternates loadings updates and constrained weight recovery with the
/// latent dynamics frozen, re-extracting DLVs each pass, until the relative
/// change of `P̂R̂ᵀ` drops below `inner_tol`.
pub fn fit_oblique(stacks: &StackedData, stacked: &Matrix, weights_init: &Matrix, config: &FitConfig) -> Result<ObliqueFit> {
    fit_oblique_with(stacks, stacked, weights_init, config, WeightRule::Constrained)
}

pub(crate) fn fit_oblique_with(
    stacks: &StackedData,
    stacked: &Matrix,
    weights_init: &Matrix,
    config: &FitConfig,
    rule: WeightRule,
) -> Result<ObliqueFit> {
    config.validate()?;
    let mut current = weights_init.clone();
    let mut previous_projector: Option<Matrix> = None;
    let mut trace = Vec::new();
    let mut last = None;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..config.inner_max_iter {
        iterations = it + 1;
        let latent = extract_dlvs(stacks, &current).map_err(|e| e.at(iterations))?;
        let update = update_loadings(stacks, latent.lagged(), stacked, config.ridge).map_err(|e| e.at(iterations))?;
        trace.push(proj_objective(stacks, latent.lagged(), stacked, &update.loadings, &update.residual_cov).ok());
        let weights = next_weights(rule, &update, &current).map_err(|e| e.at(iterations))?;
        let projector = &update.loadings * weights.signal.transpose();
        current = weights.signal.clone();
        let done = previous_projector
            .as_ref()
            .is_some_and(|prev| numlin::relative_change(&projector, prev) < config.inner_tol);
        previous_projector = Some(projector);
        last = Some((update, weights));
        if done {
            converged = true;
            break;
        }
    }

    let (update, weights) = last.expect("inner_max_iter >= 1");
    Ok(ObliqueFit {
        loadings: update.loadings,
        weights,
        residual_cov: update.residual_cov,
        iterations,
        converged,
        objective_trace: trace,
    })
}
