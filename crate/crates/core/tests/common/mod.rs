#![allow(dead_code)]

use predvar::model::{companion_spectral_radius, LatentDynamics, PredVarParams};
use predvar::numlin::{self, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `[P P̄]` with inverse condition number above 0.02.
pub fn well_conditioned_pair(rng: &mut ChaCha8Rng, p: usize, ell: usize) -> (Matrix, Matrix) {
    loop {
        let full = gaussian(rng, p, p);
        if numlin::inverse_condition(&full) > 0.02 {
            return (full.columns(0, ell).into_owned(), full.columns(ell, p - ell).into_owned());
        }
    }
}

/// Symmetric positive definite with eigenvalues in roughly [0.1, 2].
pub fn spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = gaussian(rng, n, n);
    let s = &a * a.transpose() / n as f64 + Matrix::identity(n, n) * 0.1;
    numlin::symmetrize(&s)
}

/// VAR(s) coefficients rescaled to companion spectral radius 0.8.
pub fn stable_coeffs(rng: &mut ChaCha8Rng, ell: usize, s: usize) -> Vec<Matrix> {
    let mut coeffs: Vec<Matrix> = (0..s).map(|_| gaussian(rng, ell, ell) * 0.5).collect();
    let radius = companion_spectral_radius(&coeffs);
    if radius > 0.0 {
        // scaling B_j by c^j scales every companion eigenvalue by c
        let c = 0.8 / radius;
        for (j, b) in coeffs.iter_mut().enumerate() {
            *b *= c.powi(j as i32 + 1);
        }
    }
    coeffs
}

pub fn random_params(rng: &mut ChaCha8Rng, p: usize, ell: usize, s: usize) -> PredVarParams {
    let (loadings, static_loadings) = well_conditioned_pair(rng, p, ell);
    let dynamics = LatentDynamics { coeffs: stable_coeffs(rng, ell, s), innovation_cov: spd(rng, ell) };
    PredVarParams::new(loadings, static_loadings, Some(dynamics), spd(rng, p - ell)).unwrap()
}

pub fn random_nonsingular(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    loop {
        let m = gaussian(rng, n, n);
        if numlin::inverse_condition(&m) > 0.05 {
            return m;
        }
    }
}

/// A stable six-sensor, three-DLV, second-order truth with oblique noise.
pub fn stable_truth() -> PredVarParams {
    let loadings = Matrix::from_row_slice(
        6,
        3,
        &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.3, 0.0, 0.0, -0.4, 0.6, 0.2, 0.0, -0.5],
    );
    let static_loadings = Matrix::from_row_slice(
        6,
        3,
        &[
            -0.2997, -0.4611, -0.2868, //
            -0.2403, 0.2559, 0.6444, //
            -0.1334, 0.5749, -0.5168, //
            0.6, -0.2, 0.1, //
            -0.5400, -0.2052, 0.3576, //
            -0.6733, 0.3697, -0.1592,
        ],
    );
    let b1 = Matrix::from_row_slice(3, 3, &[0.6, 0.2, 0.0, -0.2, 0.5, 0.1, 0.0, 0.3, 0.4]);
    let b2 = Matrix::from_row_slice(3, 3, &[-0.2, 0.0, 0.1, 0.0, -0.1, 0.0, 0.1, 0.0, 0.2]);
    let dynamics = LatentDynamics { coeffs: vec![b1, b2], innovation_cov: Matrix::identity(3, 3) };
    PredVarParams::new(loadings, static_loadings, Some(dynamics), Matrix::identity(3, 3) * 2.0).unwrap()
}
