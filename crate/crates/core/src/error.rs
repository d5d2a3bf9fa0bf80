use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient data: need at least {required} samples, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("rank deficiency: {0}")]
    Rank(String),

    #[error("[P P̄] is singular or nearly singular (rcond {rcond:.3e})")]
    SingularLoadings { rcond: f64 },

    #[error("weights are not dual to loadings: |RᵀP - I|_F = {residual:.3e}")]
    NotDualPair { residual: f64 },

    #[error("latent VAR is not stable: companion spectral radius {radius:.6}")]
    UnstableDynamics { radius: f64 },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("transform matrix is singular: {0}")]
    SingularTransform(String),

    #[error("VAR order must be at least 1, got {0}")]
    Order(usize),

    #[error("Gram matrix is singular: {0}")]
    SingularGram(String),

    #[error("covariance is singular: {0}")]
    SingularCovariance(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration diverged at step {step}")]
    Integration { step: usize },

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("parameters carry no latent dynamics")]
    MissingDynamics,

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, iteration: usize) -> Self {
        match self {
            already @ Error::AtIteration { .. } => already,
            other => Error::AtIteration { iteration, source: Box::new(other) },
        }
    }

    /// Short stable label, used when a failure has to be recorded as data.
    pub fn label(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::Dimension(_) => "DimensionError",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::Rank(_) => "RankError",
            Error::SingularLoadings { .. } => "SingularLoadings",
            Error::NotDualPair { .. } => "NotDualPair",
            Error::UnstableDynamics { .. } => "UnstableDynamics",
            Error::InvalidCovariance(_) => "InvalidCovariance",
            Error::SingularTransform(_) => "SingularTransform",
            Error::Order(_) => "OrderError",
            Error::SingularGram(_) => "SingularGram",
            Error::SingularCovariance(_) => "SingularCovariance",
            Error::Config(_) => "ConfigError",
            Error::Integration { .. } => "IntegrationError",
            Error::Index { .. } => "IndexError",
            Error::MissingDynamics => "MissingDynamics",
            Error::AtIteration { source, .. } => source.label(),
        }
    }
}
