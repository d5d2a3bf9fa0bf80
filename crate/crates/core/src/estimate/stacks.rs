use crate::error::{Error, Result};
use crate::model::TimeSeries;
use crate::numlin::Matrix;

/// Shifted measurement blocks `Y_0..Y_s`, each `N x p`, where row `t` of
/// `Y_i` is the sample at index `i + t`.
#[derive(Debug, Clone)]
pub struct StackedData {
    shifted: Vec<Matrix>,
}

impl StackedData {
    pub fn order(&self) -> usize {
        self.shifted.len() - 1
    }

    /// N, the number of regression rows.
    pub fn samples(&self) -> usize {
        self.shifted[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.shifted[0].ncols()
    }

    pub fn shifted(&self, i: usize) -> &Matrix {
        &self.shifted[i]
    }

    /// `Y_s`, the regression target.
    pub fn target(&self) -> &Matrix {
        &self.shifted[self.order()]
    }

    /// Lagged measurement regressors `[Y_{s-1} … Y_0]`, N x sp.
    pub fn lagged(&self) -> Matrix {
        let s = self.order();
        let (n, p) = (self.samples(), self.dim());
        let mut out = Matrix::zeros(n, s * p);
        for (block, i) in (0..s).rev().enumerate() {
            out.columns_mut(block * p, p).copy_from(&self.shifted[i]);
        }
        out
    }
}

pub fn build_stacks(y: &TimeSeries, s: usize) -> Result<StackedData> {
    if s == 0 {
        return Err(Error::Order(0));
    }
    let total = y.len();
    if total < s + 2 {
        return Err(Error::InsufficientData { required: s + 2, actual: total });
    }
    let n = total - s;
    let shifted = (0..=s).map(|i| y.data().rows(i, n).into_owned()).collect();
    Ok(StackedData { shifted })
}

/// Latent blocks `V̂_i = Y_i R̂` and the lagged regressor
/// `𝕍̂ = [V̂_{s-1} … V̂_0]`.
#[derive(Debug, Clone)]
pub struct LatentStacks {
    shifted: Vec<Matrix>,
    lagged: Matrix,
}

impl LatentStacks {
    pub fn order(&self) -> usize {
        self.shifted.len() - 1
    }

    pub fn samples(&self) -> usize {
        self.lagged.nrows()
    }

    pub fn dim(&self) -> usize {
        self.shifted[0].ncols()
    }

    pub fn shifted(&self, i: usize) -> &Matrix {
        &self.shifted[i]
    }

    /// `V̂_s`.
    pub fn target(&self) -> &Matrix {
        &self.shifted[self.order()]
    }

    /// `𝕍̂`, N x sℓ.
    pub fn lagged(&self) -> &Matrix {
        &self.lagged
    }

    /// Builds latent stacks from explicit latent samples (one per row).
    pub fn from_latent(v: &TimeSeries, s: usize) -> Result<Self> {
        let stacks = build_stacks(v, s)?;
        let lagged = stacks.lagged();
        Ok(Self { shifted: stacks.shifted, lagged })
    }
}

pub fn extract_dlvs(stacks: &StackedData, weights: &Matrix) -> Result<LatentStacks> {
    if weights.nrows() != stacks.dim() {
        return Err(Error::Dimension(format!(
            "weights have {} rows but measurements have dimension {}",
            weights.nrows(),
            stacks.dim()
        )));
    }
    let shifted: Vec<Matrix> = stacks.shifted.iter().map(|y| y * weights).collect();
    let s = shifted.len() - 1;
    let (n, ell) = (stacks.samples(), weights.ncols());
    let mut lagged = Matrix::zeros(n, s * ell);
    for (block, i) in (0..s).rev().enumerate() {
        lagged.columns_mut(block * ell, ell).copy_from(&shifted[i]);
    }
    Ok(LatentStacks { shifted, lagged })
}
