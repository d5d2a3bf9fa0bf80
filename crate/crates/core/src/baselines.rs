//! Benchmark estimators sharing [`FitResult`] with the alternating fit.
//!
//! * [`fit_orth`] runs the same alternation but extracts the DLVs with the
//!   orthogonal natural filter `v̂ = P̂†y`, ignoring the noise geometry.
//! * [`fit_oneshot`] identifies the oblique projector once, without
//!   reference to the latent dynamics, and then fits the VAR a single time.
//!
//! The one-shot signal subspace comes from an eigenanalysis of whitened
//! autocovariances: with `x_k = Σ̂_y^{-1/2} y_k`, the ℓ dominant eigenvectors
//! `A` of `Σ_{j=1..s} Σ̂_x(j) Σ̂_x(j)ᵀ` span the dynamic directions of `x`, so
//! `span(P̂) = span(Σ̂_y^{1/2} A)`. The weights then come from the
//! decorrelation constraint with the residual covariance of a full
//! measurement VAR(s).

use crate::error::{Error, Result};
use crate::estimate::{
    alternate, complete, constrained_weights, extract_dlvs, prepare, proj_objective, update_dynamics, Algorithm,
    Estimate, FitConfig, FitResult, ObjectiveRecord, WeightRule, dlv_objective,
};
use crate::model::TimeSeries;
use crate::numlin::{self, Matrix};

pub fn fit_orth(y: &TimeSeries, s: usize, ell: usize, config: &FitConfig) -> Result<FitResult> {
    alternate(y, s, ell, config, WeightRule::Orthogonal, Algorithm::Orth)
}

fn add_ridge(m: &mut Matrix, ridge: f64) {
    if ridge > 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
    }
}

/// `S^{-1/2}` for a symmetric positive definite `S`.
fn inverse_sqrt(s: &Matrix) -> Result<Matrix> {
    let eig = numlin::symmetrize(s).symmetric_eigen();
    let max = eig.eigenvalues.max();
    if max <= 0.0 || eig.eigenvalues.min() <= numlin::RANK_TOL * max {
        return Err(Error::SingularCovariance("measurement covariance".into()));
    }
    let roots = eig.eigenvalues.map(|x| 1.0 / x.sqrt());
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Dominant dynamic directions from whitened lag-1..s autocovariances.
fn autocovariance_span(z: &Matrix, s: usize, ell: usize, ridge: f64) -> Result<Matrix> {
    let (n, p) = z.shape();
    let mut cov = numlin::symmetrize(&(z.tr_mul(z) / n as f64));
    add_ridge(&mut cov, ridge);
    let whiten = inverse_sqrt(&cov)?;
    let x = z * &whiten;
    let mut m = Matrix::zeros(p, p);
    for lag in 1..=s {
        let c = x.rows(lag, n - lag).tr_mul(&x.rows(0, n - lag)) / n as f64;
        m += &c * c.transpose();
    }
    let dominant = numlin::dominant_left_basis(&numlin::symmetrize(&m), ell)?;
    Ok(numlin::psd_sqrt(&cov) * dominant)
}

pub fn fit_oneshot(y: &TimeSeries, s: usize, ell: usize, config: &FitConfig) -> Result<FitResult> {
    let (scaling, stacks) = prepare(y, s, ell, config)?;
    let n = stacks.samples() as f64;
    let z = scaling.apply(y)?;

    // stage 1: signal subspace, then weights from a full VAR(s) residual
    let span = autocovariance_span(z.data(), s, ell, config.ridge)?;
    let regressors = stacks.lagged();
    let mut gram = regressors.tr_mul(&regressors);
    add_ridge(&mut gram, config.ridge);
    let coeffs = numlin::solve_spd(&gram, &regressors.tr_mul(stacks.target()), "lagged measurement Gram")?;
    let resid = stacks.target() - &regressors * &coeffs;
    let mut full_cov = numlin::symmetrize(&(resid.tr_mul(&resid) / n));
    add_ridge(&mut full_cov, config.ridge);

    let weights = constrained_weights(&span, &full_cov)?.signal;
    let cross = weights.tr_mul(&span);
    let cross_inv = cross
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Rank("weights are orthogonal to the estimated signal subspace".into()))?;
    let loadings = &span * cross_inv;

    // stage 2: one dynamics update on the extracted DLVs
    let latent = extract_dlvs(&stacks, &weights)?;
    let dynamics = update_dynamics(&latent, config.ridge)?;
    let predicted = latent.lagged() * &dynamics.stacked;
    let resid = stacks.target() - predicted * loadings.transpose();
    let residual_cov = numlin::symmetrize(&(resid.tr_mul(&resid) / n));

    let record = ObjectiveRecord {
        iteration: 1,
        dlv: dlv_objective(&latent, &dynamics.stacked, &dynamics.innovation_cov).ok(),
        proj: proj_objective(&stacks, latent.lagged(), &dynamics.stacked, &loadings, &residual_cov).ok(),
    };
    complete(Estimate {
        algorithm: Algorithm::OneShot,
        loadings,
        weights,
        dynamics,
        residual_cov,
        iterations: 1,
        converged: true,
        objective_trace: vec![record],
        scaling,
    })
}

/// Runs the named estimator.
pub fn fit_with(algorithm: Algorithm, y: &TimeSeries, s: usize, ell: usize, config: &FitConfig) -> Result<FitResult> {
    match algorithm {
        Algorithm::PredVar => crate::estimate::fit_predvar(y, s, ell, config),
        Algorithm::OneShot => fit_oneshot(y, s, ell, config),
        Algorithm::Orth => fit_orth(y, s, ell, config),
        Algorithm::Truth => Err(Error::Config("truth is not an estimator".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, LatentDynamics, PredVarParams};

    fn noiseless_data() -> (TimeSeries, Matrix) {
        let p = Matrix::from_row_slice(5, 2, &[1.0, 0.0, 0.5, 1.0, 0.0, 0.3, -0.4, 0.8, 0.2, 0.0]);
        let b = Matrix::from_row_slice(2, 2, &[0.7, 0.2, -0.3, 0.6]);
        let static_loadings = Matrix::from_row_slice(
            5,
            3,
            &[0.0, 0.1, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.2],
        );
        let params = PredVarParams::new(
            p.clone(),
            static_loadings,
            Some(LatentDynamics { coeffs: vec![b], innovation_cov: Matrix::identity(2, 2) }),
            Matrix::zeros(3, 3),
        )
        .unwrap();
        let (y, _) = simulate(&params, 400, 3, 200).unwrap();
        (y, p)
    }

    #[test]
    fn oneshot_exact_on_noiseless_data() {
        let (y, p) = noiseless_data();
        let cfg = FitConfig { ridge: 1e-9, ..FitConfig::default() };
        let fit = fit_oneshot(&y, 1, 2, &cfg).unwrap();
        let angles = numlin::canonical_angles(fit.params.loadings(), &p).unwrap();
        // loadings live in the scaled frame; compare in original units
        let angles_orig = numlin::canonical_angles(&fit.loadings_original(), &p).unwrap();
        assert!(angles_orig.iter().all(|a| *a < 1e-4), "{angles_orig:?} {angles:?}");
        let recon = fit.reconstruct_signal(&y).unwrap();
        assert!((recon - y.data()).norm() / y.data().norm() < 1e-6);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn oneshot_is_deterministic() {
        let (y, _) = noiseless_data();
        let cfg = FitConfig { ridge: 1e-9, ..FitConfig::default() };
        assert_eq!(fit_oneshot(&y, 1, 2, &cfg).unwrap(), fit_oneshot(&y, 1, 2, &cfg).unwrap());
    }

    #[test]
    fn truth_is_not_an_estimator() {
        let (y, _) = noiseless_data();
        assert!(fit_with(Algorithm::Truth, &y, 1, 2, &FitConfig::default()).is_err());
    }
}
