//! Latent VAR updates given extracted DLVs.

use crate::error::{Error, Result};
use crate::model::LatentDynamics;
use crate::numlin::{self, Matrix};

use super::stacks::LatentStacks;

/// Stacked coefficients `𝔹̂ = [B̂_1 … B̂_s]ᵀ` (sℓ x ℓ) and `Σ̂_ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsUpdate {
    pub stacked: Matrix,
    pub innovation_cov: Matrix,
}

impl DynamicsUpdate {
    pub fn into_dynamics(self) -> LatentDynamics {
        LatentDynamics { coeffs: unstack_coeffs(&self.stacked), innovation_cov: self.innovation_cov }
    }
}

/// Splits `𝔹` into `B_1..B_s`; block `j` of `𝔹` holds `B_jᵀ`.
pub fn unstack_coeffs(stacked: &Matrix) -> Vec<Matrix> {
    let ell = stacked.ncols();
    let s = stacked.nrows() / ell;
    (0..s).map(|j| stacked.rows(j * ell, ell).transpose()).collect()
}

pub fn stack_coeffs(coeffs: &[Matrix]) -> Matrix {
    let ell = coeffs.first().map_or(0, |b| b.nrows());
    let mut out = Matrix::zeros(coeffs.len() * ell, ell);
    for (j, b) in coeffs.iter().enumerate() {
        out.rows_mut(j * ell, ell).copy_from(&b.transpose());
    }
    out
}

/// Least-squares VAR fit: `𝔹̂ = (𝕍̂ᵀ𝕍̂ + ridge·I)⁻¹ 𝕍̂ᵀ V̂_s` and
/// `Σ̂_ε = (V̂_s − 𝕍̂𝔹̂)ᵀ(V̂_s − 𝕍̂𝔹̂)/N`.
pub fn update_dynamics(latent: &LatentStacks, ridge: f64) -> Result<DynamicsUpdate> {
    let lagged = latent.lagged();
    let mut gram = lagged.tr_mul(lagged);
    if ridge > 0.0 {
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
    }
    let rhs = lagged.tr_mul(latent.target());
    let stacked = numlin::solve_spd(&gram, &rhs, "lagged DLV Gram 𝕍ᵀ𝕍")?;
    let resid = latent.target() - lagged * &stacked;
    let innovation_cov = numlin::symmetrize(&(resid.tr_mul(&resid) / latent.samples() as f64));
    Ok(DynamicsUpdate { stacked, innovation_cov })
}

/// `N ln|Σ_ε| + Σ_k (v_k − ṽ_k)ᵀ Σ_ε⁻¹ (v_k − ṽ_k)`.
pub fn dlv_objective(latent: &LatentStacks, stacked: &Matrix, innovation_cov: &Matrix) -> Result<f64> {
    if stacked.shape() != (latent.lagged().ncols(), latent.dim()) {
        return Err(Error::Dimension(format!("stacked coefficients have shape {:?}", stacked.shape())));
    }
    let (logdet, inv) = numlin::logdet_and_inverse(innovation_cov, "innovation covariance Σ_ε")?;
    let resid = latent.target() - latent.lagged() * stacked;
    let quad = (resid.tr_mul(&resid) * inv).trace();
    Ok(latent.samples() as f64 * logdet + quad)
}
