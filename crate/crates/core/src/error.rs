use thiserror::Error;

use crate::robust::RobustFit;

/// Errors produced anywhere in the regression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is outside the valid range {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("model with {dim} coefficients is not estimable from {n} observations")]
    DegenerateModel { n: usize, dim: usize },

    #[error("model {model:?} fits the data exactly; its posterior weight is undefined")]
    ExactFit { model: Vec<usize> },

    #[error("design is not standardized and orthogonal (max deviation {deviation:.3e})")]
    NonOrthogonalDesign { deviation: f64 },

    #[error("column {column} has zero scale")]
    DegenerateScale { column: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        best: Box<RobustFit>,
    },

    #[error("robust regression of column {response} on column {regressor} failed: {source}")]
    PairFit {
        regressor: usize,
        response: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("no strictly positive eigenvalue in the correlation matrix")]
    NoPositiveEigenvalues,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scaling search failed to bracket the target acceptance rate within {steps} steps (bracket [{low:.3e}, {high:.3e}], acceptance {acceptance:.3})")]
    ScalingSearch {
        steps: usize,
        low: f64,
        high: f64,
        acceptance: f64,
    },

    #[error("optimal scaling stayed at a grid endpoint after {regrids} re-grids (summed IAT curve {iat_curve:?})")]
    GridEndpoint { regrids: usize, iat_curve: Vec<(f64, f64)> },

    #[error("series is constant; autocorrelation is undefined")]
    ConstantSeries,

    #[error("series too short: {len} < {min}")]
    SeriesTooShort { len: usize, min: usize },
}

impl Error {
    /// Whether the error traces back to the supplied data or settings rather
    /// than to a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::DimensionMismatch(_)
                | Error::DegenerateModel { .. }
                | Error::DegenerateScale { .. }
                | Error::InvalidInput(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
