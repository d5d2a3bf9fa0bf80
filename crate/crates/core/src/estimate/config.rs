use crate::error::{Error, Result};

/// Iteration controls shared by every estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Outer loop stops when the relative change of `P̂R̂ᵀ` falls below this.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Same criterion for the loadings/weights loop with frozen dynamics.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Added to the diagonal of every Gram matrix before solving.
    pub ridge: f64,
    /// Z-score each channel before fitting. Disabling fits raw data.
    pub standardize: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-6,
            outer_max_iter: 500,
            inner_tol: 1e-8,
            inner_max_iter: 100,
            ridge: 0.0,
            standardize: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.outer_tol) || !positive(self.inner_tol) {
            return Err(Error::Config("tolerances must be finite and positive".into()));
        }
        if self.outer_max_iter == 0 || self.inner_max_iter == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        if !self.ridge.is_finite() || self.ridge < 0.0 {
            return Err(Error::Config("ridge must be finite and non-negative".into()));
        }
        Ok(())
    }
}
