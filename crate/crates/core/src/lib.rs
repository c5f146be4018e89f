//! Robust Bayesian principal component regression.
//!
//! Covariates are reduced with a (robust) principal component analysis, the
//! relevant components are screened with Bayes factors, and predictions are
//! averaged over a nested sequence of regression models whose posterior is
//! sampled by reversible-jump MCMC under log-Pareto-tailed normal errors.
//! The normal-error posterior is available in closed form and serves as the
//! nonrobust baseline.

pub mod error;
pub mod lptn;
pub mod model;
pub mod normal_posterior;
pub mod pca;
pub mod pipeline;
mod optim;
pub mod rj;
pub mod robust;
pub mod special;
pub mod synthetic;
pub mod tuner;

pub use error::{Error, Result};
pub use lptn::LptnParams;
pub use model::{Dataset, ModelSpace, ModelSpec};
