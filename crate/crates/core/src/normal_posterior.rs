//! Closed-form posterior of the nested regression models under normal errors
//! with prior `π(σ, β | k) ∝ 1/σ`.
//!
//! These formulas rely on a standardized response (`Σ y = 0`,
//! `Σ y² = n - 1`) and a design whose non-intercept columns are centered,
//! pairwise orthogonal and scaled to `Σ x² = n - 1`. [`check_design`]
//! enforces that.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpace, ModelSpec};
use crate::special::ln_gamma;

/// Deviations below this are treated as exact.
pub const DESIGN_TOLERANCE: f64 = 1e-8;
/// Deviations above this make the closed forms unusable.
pub const DESIGN_HARD_LIMIT: f64 = 1e-4;

/// Largest deviation of the dataset from the standardized orthogonal form,
/// measured on the sums that the closed forms depend on.
pub fn design_deviation(data: &Dataset) -> f64 {
    let n1 = data.n() as f64 - 1.0;
    let y = &data.y;
    let mut dev = y.sum().abs().max((y.norm_squared() - n1).abs());
    let gram = data.x.transpose() * &data.x;
    for j in 1..data.d() {
        dev = dev.max(gram[(0, j)].abs()); // column sum
        dev = dev.max((gram[(j, j)] - n1).abs());
        for s in (j + 1)..data.d() {
            dev = dev.max(gram[(j, s)].abs());
        }
    }
    dev
}

pub fn check_design(data: &Dataset) -> Result<()> {
    let deviation = design_deviation(data);
    if deviation > DESIGN_HARD_LIMIT {
        return Err(Error::NonOrthogonalDesign { deviation });
    }
    if deviation > DESIGN_TOLERANCE {
        log::warn!("design deviates from standardized orthogonal form by {deviation:.3e}");
    }
    Ok(())
}

/// `β̂_k`: zero for the intercept, `Σ x_ij y_i / (n - 1)` otherwise.
pub fn beta_hat(model: &ModelSpec, data: &Dataset) -> DVector<f64> {
    let n1 = data.n() as f64 - 1.0;
    DVector::from_iterator(
        model.dim(),
        model.columns().iter().map(|&c| {
            if c == 0 {
                0.0
            } else {
                data.x.column(c).dot(&data.y) / n1
            }
        }),
    )
}

/// Residual sum of squares `‖y - X_k β̂_k‖²`.
pub fn rss(model: &ModelSpec, data: &Dataset) -> f64 {
    let fitted = data.design(model) * beta_hat(model, data);
    (&data.y - fitted).norm_squared()
}

/// Unnormalized log posterior probability of `model`:
/// `log π(k) + log Γ((n-d)/2) + (d/2) log π - ((n-d)/2) log(rss / (n-1))`.
pub fn model_log_weight(model: &ModelSpec, data: &Dataset, log_prior: f64) -> Result<f64> {
    model.check_against(data)?;
    check_design(data)?;
    log_weight_unchecked(model, data, log_prior)
}

fn log_weight_unchecked(model: &ModelSpec, data: &Dataset, log_prior: f64) -> Result<f64> {
    let n = data.n();
    let d = model.dim();
    if n <= d {
        return Err(Error::DegenerateModel { n, dim: d });
    }
    let rss = rss(model, data);
    if rss <= f64::EPSILON * data.y.norm_squared().max(1.0) {
        return Err(Error::ExactFit {
            model: model.columns().to_vec(),
        });
    }
    let half_dof = 0.5 * (n - d) as f64;
    Ok(log_prior + ln_gamma(half_dof) + 0.5 * d as f64 * PI.ln()
        - half_dof * (rss / (n as f64 - 1.0)).ln())
}

/// Normalizes log weights with the log-sum-exp shift.
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalPosteriorSummary {
    pub model_log_weights: Vec<f64>,
    pub model_probs: Vec<f64>,
    pub beta_hat: Vec<DVector<f64>>,
    pub rss: Vec<f64>,
    /// Inverse-gamma law of `σ²` given the model: shape `(n - d_k)/2`.
    pub sigma2_shape: Vec<f64>,
    /// Inverse-gamma rate `rss_k / 2`.
    pub sigma2_rate: Vec<f64>,
    n: usize,
}

impl NormalPosteriorSummary {
    /// Fits every model of `space`. `log_priors` defaults to a uniform prior.
    pub fn fit(space: &ModelSpace, data: &Dataset, log_priors: Option<&[f64]>) -> Result<Self> {
        space.check_against(data)?;
        check_design(data)?;
        if let Some(lp) = log_priors {
            if lp.len() != space.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} prior weights for {} models",
                    lp.len(),
                    space.len()
                )));
            }
        }
        let n = data.n();
        let mut log_weights = Vec::with_capacity(space.len());
        let mut betas = Vec::with_capacity(space.len());
        let mut rss_all = Vec::with_capacity(space.len());
        for (k, model) in space.models().iter().enumerate() {
            let prior = log_priors.map_or(0.0, |lp| lp[k]);
            log_weights.push(log_weight_unchecked(model, data, prior)?);
            betas.push(beta_hat(model, data));
            rss_all.push(rss(model, data));
        }
        Ok(Self {
            model_probs: normalize_log_weights(&log_weights),
            model_log_weights: log_weights,
            sigma2_shape: space
                .models()
                .iter()
                .map(|m| 0.5 * (n - m.dim()) as f64)
                .collect(),
            sigma2_rate: rss_all.iter().map(|r| 0.5 * r).collect(),
            beta_hat: betas,
            rss: rss_all,
            n,
        })
    }

    /// Posterior mean of `σ_k`.
    pub fn sigma_mean(&self, k: usize) -> f64 {
        let a = self.sigma2_shape[k];
        self.sigma2_rate[k].sqrt() * (ln_gamma(a - 0.5) - ln_gamma(a)).exp()
    }

    /// Marginal posterior standard deviation of each coefficient of model `k`
    /// (conditional variance `σ²/n` or `σ²/(n-1)`, averaged over `σ²`).
    pub fn beta_sd(&self, k: usize) -> DVector<f64> {
        let e_sigma2 = self.sigma2_rate[k] / (self.sigma2_shape[k] - 1.0);
        let n = self.n as f64;
        DVector::from_iterator(
            self.beta_hat[k].len(),
            (0..self.beta_hat[k].len()).map(|j| {
                let denom = if j == 0 { n } else { n - 1.0 };
                (e_sigma2 / denom).sqrt()
            }),
        )
    }
}

/// Per-model linear predictions `x_new,I_kᵀ β̂_k` for a full design row.
pub fn per_model_predictions(
    space: &ModelSpace,
    betas: &[DVector<f64>],
    x_new: &[f64],
) -> Result<Vec<f64>> {
    if x_new.first() != Some(&1.0) {
        return Err(Error::InvalidInput(
            "new design row must start with the intercept 1".into(),
        ));
    }
    space
        .models()
        .iter()
        .zip(betas)
        .map(|(model, beta)| {
            model.columns().iter().zip(beta.iter()).try_fold(0.0, |acc, (&c, b)| {
                x_new
                    .get(c)
                    .map(|x| acc + x * b)
                    .ok_or_else(|| {
                        Error::DimensionMismatch(format!(
                            "design row has {} entries, model uses column {c}",
                            x_new.len()
                        ))
                    })
            })
        })
        .collect()
}

/// `Σ_k π(k|y) x_new,kᵀ β̂_k`.
pub fn predict_model_average(
    space: &ModelSpace,
    summary: &NormalPosteriorSummary,
    x_new: &[f64],
) -> Result<f64> {
    let preds = per_model_predictions(space, &summary.beta_hat, x_new)?;
    Ok(preds.iter().zip(&summary.model_probs).map(|(p, w)| p * w).sum())
}

/// Finite-sample comparison of posterior odds with the BIC difference for a
/// pair of nested models under a uniform model prior.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BicDiagnostic {
    /// `log[π(t|y) / π(s|y)]`
    pub log_posterior_odds: f64,
    /// `-(BIC_t - BIC_s) / 2`
    pub neg_half_bic_diff: f64,
    /// `log_posterior_odds - neg_half_bic_diff`
    pub difference: f64,
}

pub fn bic_posterior_consistency(
    s: &ModelSpec,
    t: &ModelSpec,
    data: &Dataset,
) -> Result<BicDiagnostic> {
    if !t.columns().starts_with(s.columns()) {
        return Err(Error::InvalidInput(format!(
            "model {:?} is not nested in {:?}",
            s.columns(),
            t.columns()
        )));
    }
    let log_posterior_odds = model_log_weight(t, data, 0.0)? - model_log_weight(s, data, 0.0)?;
    let n = data.n() as f64;
    let bic = |m: &ModelSpec| n * (rss(m, data) / n).ln() + (m.dim() as f64 + 1.0) * n.ln();
    let neg_half_bic_diff = -0.5 * (bic(t) - bic(s));
    Ok(BicDiagnostic {
        log_posterior_odds,
        neg_half_bic_diff,
        difference: log_posterior_odds - neg_half_bic_diff,
    })
}
