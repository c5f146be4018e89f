//! Reversible-jump sampler over a nested sequence of regression models.
//!
//! Each iteration draws a move type with probabilities `(ϑ, (1-ϑ)/2, (1-ϑ)/2)`:
//! a random-walk update of `(σ, β)` with independent LPTN increments scaled
//! by `ℓ_k`, a birth that shifts the current parameters by `c_{k+1}` and
//! appends a coefficient drawn from `q_{k+1}`, or a death that removes the
//! last coefficient and subtracts `c_k`. The prior is `π(k) / σ` with flat
//! coefficients. Model indices are 0-based in the API (model `k` here is model
//! `k + 1` in 1-based notation).

use rand::distributions::Open01;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lptn::LptnParams;
use crate::model::{Dataset, ModelSpace};
use crate::special::{norm_ln_pdf, LN_SQRT_2PI};
use crate::tuner::iat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ErrorModel {
    Lptn { rho: f64 },
    Normal,
}

impl ErrorModel {
    pub fn lptn(p: &LptnParams) -> Self {
        ErrorModel::Lptn { rho: p.rho }
    }
}

#[derive(Debug, Clone, Copy)]
enum Density {
    Lptn(LptnParams),
    Normal,
}

impl Density {
    #[inline]
    fn ln_pdf(&self, z: f64) -> f64 {
        match self {
            Density::Lptn(p) => p.ln_pdf(z),
            Density::Normal => norm_ln_pdf(z),
        }
    }
}

/// Posterior target: data, model space and error density, with each model's
/// design stored row-major for fast likelihood evaluation.
#[derive(Debug, Clone)]
pub struct Target {
    n: usize,
    y: Vec<f64>,
    designs: Vec<Vec<f64>>,
    dims: Vec<usize>,
    density: Density,
    pub error_model: ErrorModel,
    pub log_priors: Vec<f64>,
}

impl Target {
    /// `log_priors` defaults to a uniform prior over the space.
    pub fn new(space: &ModelSpace, data: &Dataset, error_model: ErrorModel, log_priors: Option<Vec<f64>>) -> Result<Self> {
        space.check_against(data)?;
        // a lone model only ever sees updates
        if space.len() > 1 && !space.is_nested() {
            return Err(Error::InvalidInput(
                "reversible-jump moves need a nested model sequence".into(),
            ));
        }
        let log_priors = log_priors.unwrap_or_else(|| vec![0.0; space.len()]);
        if log_priors.len() != space.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} log-priors for {} models",
                log_priors.len(),
                space.len()
            )));
        }
        let density = match error_model {
            ErrorModel::Lptn { rho } => Density::Lptn(LptnParams::new(rho)?),
            ErrorModel::Normal => Density::Normal,
        };
        let n = data.n();
        let designs = space
            .models()
            .iter()
            .map(|m| {
                let mut rows = Vec::with_capacity(n * m.dim());
                for i in 0..n {
                    rows.extend(m.columns().iter().map(|&c| data.x[(i, c)]));
                }
                rows
            })
            .collect();
        Ok(Self {
            n,
            y: data.y.iter().copied().collect(),
            designs,
            dims: space.models().iter().map(|m| m.dim()).collect(),
            density,
            error_model,
            log_priors,
        })
    }

    pub fn n_models(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, k: usize) -> usize {
        self.dims[k]
    }

    pub fn max_dim(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(0)
    }

    /// `log f(y | k, σ, β) = Σ log f(r_i / σ) − n log σ`; `-∞` for σ ≤ 0.
    pub fn log_likelihood(&self, k: usize, sigma: f64, beta: &[f64]) -> f64 {
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let d = self.dims[k];
        debug_assert_eq!(beta.len(), d);
        let inv = 1.0 / sigma;
        // the normal core is accumulated as a sum of squares; only tail
        // points pay for logarithms
        let tau = match &self.density {
            Density::Lptn(p) => p.tau,
            Density::Normal => f64::INFINITY,
        };
        let mut squares = 0.0;
        let mut tail = 0.0;
        let mut core = 0usize;
        for (row, &yi) in self.designs[k].chunks_exact(d).zip(&self.y) {
            let fitted: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let z = (yi - fitted) * inv;
            if z.abs() <= tau {
                squares += z * z;
                core += 1;
            } else {
                tail += self.density.ln_pdf(z);
            }
        }
        let total = tail - 0.5 * squares - core as f64 * LN_SQRT_2PI;
        total - self.n as f64 * sigma.ln()
    }

    /// Unnormalized log posterior `log π(k) − log σ + log f(y | k, σ, β)`.
    pub fn log_posterior(&self, state: &ParameterState) -> f64 {
        if !(state.sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.log_priors[state.k] - state.sigma.ln() + self.log_likelihood(state.k, state.sigma, &state.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub k: usize,
    pub sigma: f64,
    pub beta: Vec<f64>,
}

/// Location-scale LPTN proposal for the coefficient added by a birth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthProposal {
    pub location: f64,
    pub scale: f64,
}

impl BirthProposal {
    pub fn ln_density(&self, kernel: &LptnParams, u: f64) -> f64 {
        kernel.ln_pdf((u - self.location) / self.scale) - self.scale.ln()
    }

    pub fn draw<R: Rng + ?Sized>(&self, kernel: &LptnParams, rng: &mut R) -> f64 {
        self.location + self.scale * kernel.draw(rng)
    }
}

/// Per-model distribution used to draw a starting state: σ from a normal
/// truncated at 0, coefficients from independent normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartDistribution {
    pub sigma_mean: f64,
    pub sigma_sd: f64,
    pub beta_mean: Vec<f64>,
    pub beta_sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerInputs {
    /// Probability of an update move.
    pub vartheta: f64,
    /// Random-walk scaling per model.
    pub ell: Vec<f64>,
    /// `shifts[k]` (k ≥ 1) is added to `(σ, β)` of model `k − 1` on a birth
    /// into model `k`; its first entry is 0. `shifts[0]` is empty.
    pub shifts: Vec<Vec<f64>>,
    /// `birth[k]` (k ≥ 1) proposes the coefficient added when entering model
    /// `k`; `birth[0]` is `None`.
    pub birth: Vec<Option<BirthProposal>>,
    /// LPTN parameter of the update and birth kernels.
    pub kernel_rho: f64,
}

impl SamplerInputs {
    pub fn validate(&self, target: &Target) -> Result<()> {
        let m = target.n_models();
        if !(self.vartheta > 0.0 && self.vartheta <= 1.0) {
            return Err(Error::Domain {
                name: "vartheta",
                value: self.vartheta,
                range: "(0, 1]",
            });
        }
        if self.ell.len() != m || self.shifts.len() != m || self.birth.len() != m {
            return Err(Error::InvalidInput(format!(
                "sampler inputs cover {}/{}/{} models (scalings/shifts/births), space has {m}",
                self.ell.len(),
                self.shifts.len(),
                self.birth.len()
            )));
        }
        for k in 0..m {
            if !(self.ell[k] > 0.0 && self.ell[k].is_finite()) {
                return Err(Error::InvalidInput(format!("scaling of model {k} is {}", self.ell[k])));
            }
            // with ϑ = 1 no birth or death is ever proposed
            if k == 0 || self.vartheta == 1.0 {
                continue;
            }
            let c = &self.shifts[k];
            if c.len() != target.dim(k - 1) + 1 {
                return Err(Error::InvalidInput(format!(
                    "shift of model {k} has {} entries, expected {}",
                    c.len(),
                    target.dim(k - 1) + 1
                )));
            }
            if c[0] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "shift of model {k} moves σ by {}; its first entry must be 0",
                    c[0]
                )));
            }
            match self.birth[k] {
                Some(q) if q.scale > 0.0 && q.location.is_finite() => {}
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "missing or invalid birth proposal for model {k}"
                    )))
                }
            }
        }
        LptnParams::new(self.kernel_rho)?;
        Ok(())
    }

    /// Inputs for a fixed-model random-walk Metropolis run (ϑ = 1).
    pub fn random_walk(ell: Vec<f64>, kernel_rho: f64) -> Self {
        let m = ell.len();
        Self {
            vartheta: 1.0,
            ell,
            shifts: vec![Vec::new(); m],
            birth: vec![None; m],
            kernel_rho,
        }
    }
}

/// Log acceptance ratio of an update from `current` to `(cand_sigma, cand_beta)`
/// in the same model, before capping at 0.
pub fn log_accept_update(target: &Target, current: &ParameterState, cand_sigma: f64, cand_beta: &[f64]) -> f64 {
    let cur_ll = target.log_likelihood(current.k, current.sigma, &current.beta);
    update_ratio(target, current, cur_ll, cand_sigma, cand_beta).0
}

/// Update ratio given the current log-likelihood; also returns the
/// candidate's log-likelihood.
fn update_ratio(target: &Target, current: &ParameterState, cur_ll: f64, cand_sigma: f64, cand_beta: &[f64]) -> (f64, f64) {
    if !(cand_sigma > 0.0) {
        return (f64::NEG_INFINITY, f64::NEG_INFINITY);
    }
    let cand_ll = target.log_likelihood(current.k, cand_sigma, cand_beta);
    ((-cand_sigma.ln() + cand_ll) - (-current.sigma.ln() + cur_ll), cand_ll)
}

/// The state reached by a birth from `current` with new coefficient `u`.
pub fn birth_state(inputs: &SamplerInputs, current: &ParameterState, u: f64) -> ParameterState {
    let c = &inputs.shifts[current.k + 1];
    let mut beta: Vec<f64> = current.beta.iter().zip(&c[1..]).map(|(b, s)| b + s).collect();
    beta.push(u);
    ParameterState {
        k: current.k + 1,
        sigma: current.sigma + c[0],
        beta,
    }
}

/// The state reached by a death from `current` (which must have k ≥ 1).
pub fn death_state(inputs: &SamplerInputs, current: &ParameterState) -> ParameterState {
    let c = &inputs.shifts[current.k];
    let keep = current.beta.len() - 1;
    ParameterState {
        k: current.k - 1,
        sigma: current.sigma - c[0],
        beta: current.beta[..keep].iter().zip(&c[1..]).map(|(b, s)| b - s).collect(),
    }
}

/// Log acceptance ratio of a birth from `current` with new coefficient `u`.
/// `current.k` must not be the last model.
pub fn log_accept_birth(target: &Target, inputs: &SamplerInputs, kernel: &LptnParams, current: &ParameterState, u: f64) -> f64 {
    let cur_ll = target.log_likelihood(current.k, current.sigma, &current.beta);
    birth_ratio(target, inputs, kernel, current, cur_ll, u).0
}

fn birth_ratio(
    target: &Target,
    inputs: &SamplerInputs,
    kernel: &LptnParams,
    current: &ParameterState,
    cur_ll: f64,
    u: f64,
) -> (f64, ParameterState, f64) {
    let next = birth_state(inputs, current, u);
    if !(next.sigma > 0.0) {
        return (f64::NEG_INFINITY, next, f64::NEG_INFINITY);
    }
    let q = inputs.birth[next.k].expect("validated birth proposal");
    let next_ll = target.log_likelihood(next.k, next.sigma, &next.beta);
    let log_a = target.log_priors[next.k] + next_ll - target.log_priors[current.k] - cur_ll - q.ln_density(kernel, u);
    (log_a, next, next_ll)
}

/// Log acceptance ratio of a death from `current` (k ≥ 1).
pub fn log_accept_death(target: &Target, inputs: &SamplerInputs, kernel: &LptnParams, current: &ParameterState) -> f64 {
    let cur_ll = target.log_likelihood(current.k, current.sigma, &current.beta);
    death_ratio(target, inputs, kernel, current, cur_ll).0
}

fn death_ratio(
    target: &Target,
    inputs: &SamplerInputs,
    kernel: &LptnParams,
    current: &ParameterState,
    cur_ll: f64,
) -> (f64, ParameterState, f64) {
    let prev = death_state(inputs, current);
    if !(prev.sigma > 0.0) {
        return (f64::NEG_INFINITY, prev, f64::NEG_INFINITY);
    }
    let q = inputs.birth[current.k].expect("validated birth proposal");
    let removed = *current.beta.last().expect("model with a coefficient");
    let prev_ll = target.log_likelihood(prev.k, prev.sigma, &prev.beta);
    let log_a = target.log_priors[prev.k] + prev_ll + q.ln_density(kernel, removed) - target.log_priors[current.k] - cur_ll;
    (log_a, prev, prev_ll)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Move {
    Update,
    Birth,
    Death,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounts {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveCounts {
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

/// Acceptance counts for one model, indexed by the model the move starts in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acceptance {
    pub update: MoveCounts,
    pub birth: MoveCounts,
    pub death: MoveCounts,
}

impl Acceptance {
    fn counts(&mut self, mv: Move) -> &mut MoveCounts {
        match mv {
            Move::Update => &mut self.update,
            Move::Birth => &mut self.birth,
            Move::Death => &mut self.death,
        }
    }
}

/// States after each iteration stored column-wise. Coefficients are kept in
/// a flat row-major array of width `max_dim`; absent coefficients are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub seed: u64,
    pub burn_in: usize,
    pub max_dim: usize,
    pub dims: Vec<usize>,
    pub k: Vec<u32>,
    pub sigma: Vec<f64>,
    pub beta: Vec<f64>,
    pub acceptance: Vec<Acceptance>,
    pub initial: ParameterState,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn beta_row(&self, t: usize) -> &[f64] {
        &self.beta[t * self.max_dim..(t + 1) * self.max_dim]
    }

    pub fn state(&self, t: usize) -> ParameterState {
        let k = self.k[t] as usize;
        ParameterState {
            k,
            sigma: self.sigma[t],
            beta: self.beta_row(t)[..self.dims[k]].to_vec(),
        }
    }

    fn push(&mut self, s: &ParameterState) {
        self.k.push(s.k as u32);
        self.sigma.push(s.sigma);
        self.beta.extend_from_slice(&s.beta);
        self.beta.extend(std::iter::repeat(f64::NAN).take(self.max_dim - s.beta.len()));
    }

    /// Overall acceptance rate of update moves.
    pub fn update_acceptance(&self) -> f64 {
        let (p, a) = self
            .acceptance
            .iter()
            .fold((0, 0), |(p, a), c| (p + c.update.proposed, a + c.update.accepted));
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    }
}

#[derive(Debug, Clone)]
pub enum Init {
    State(ParameterState),
    /// `K(0)` uniform over the space, then parameters from the model's start
    /// distribution.
    Draw(Vec<StartDistribution>),
}

pub fn draw_start<R: Rng + ?Sized>(k: usize, dist: &StartDistribution, rng: &mut R) -> ParameterState {
    let sigma = loop {
        let s = dist.sigma_mean + dist.sigma_sd * rng.sample::<f64, _>(StandardNormal);
        if s > 0.0 {
            break s;
        }
    };
    let beta = dist
        .beta_mean
        .iter()
        .zip(&dist.beta_sd)
        .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ParameterState { k, sigma, beta }
}

/// Runs `t` iterations. Every state after each iteration is recorded,
/// including the first `burn_in` ones, which summaries skip.
pub fn run_chain(target: &Target, inputs: &SamplerInputs, init: Init, t: usize, burn_in: usize, seed: u64) -> Result<ChainTrace> {
    inputs.validate(target)?;
    if burn_in >= t {
        return Err(Error::InvalidInput(format!(
            "burn-in {burn_in} must be shorter than the run length {t}"
        )));
    }
    let kernel = LptnParams::new(inputs.kernel_rho)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = match init {
        Init::State(s) => s,
        Init::Draw(dists) => {
            if dists.len() != target.n_models() {
                return Err(Error::InvalidInput("start distributions do not cover the space".into()));
            }
            let k = rng.gen_range(0..target.n_models());
            draw_start(k, &dists[k], &mut rng)
        }
    };
    if state.k >= target.n_models() || state.beta.len() != target.dim(state.k) || !(state.sigma > 0.0) {
        return Err(Error::InvalidInput(format!("invalid initial state {state:?}")));
    }

    let max_dim = target.max_dim();
    let mut trace = ChainTrace {
        seed,
        burn_in,
        max_dim,
        dims: target.dims.clone(),
        k: Vec::with_capacity(t),
        sigma: Vec::with_capacity(t),
        beta: Vec::with_capacity(t * max_dim),
        acceptance: vec![Acceptance::default(); target.n_models()],
        initial: state.clone(),
    };
    let last = target.n_models() - 1;
    let birth_cut = inputs.vartheta + 0.5 * (1.0 - inputs.vartheta);
    let mut cand_beta = Vec::with_capacity(max_dim);
    let mut cur_ll = target.log_likelihood(state.k, state.sigma, &state.beta);

    for _ in 0..t {
        let u: f64 = rng.gen();
        let mv = if u <= inputs.vartheta {
            Move::Update
        } else if u <= birth_cut {
            Move::Birth
        } else {
            Move::Death
        };
        let from = state.k;
        let accepted = match mv {
            Move::Update => {
                let ell = inputs.ell[from];
                let cand_sigma = state.sigma + ell * kernel.draw(&mut rng);
                cand_beta.clear();
                cand_beta.extend(state.beta.iter().map(|b| b + ell * kernel.draw(&mut rng)));
                let (log_a, cand_ll) = update_ratio(target, &state, cur_ll, cand_sigma, &cand_beta);
                let ok = accept(log_a, &mut rng);
                if ok {
                    state.sigma = cand_sigma;
                    state.beta.clone_from(&cand_beta);
                    cur_ll = cand_ll;
                }
                ok
            }
            Move::Birth if from < last => {
                let q = inputs.birth[from + 1].expect("validated birth proposal");
                let u_new = q.draw(&kernel, &mut rng);
                let (log_a, next, next_ll) = birth_ratio(target, inputs, &kernel, &state, cur_ll, u_new);
                let ok = accept(log_a, &mut rng);
                if ok {
                    state = next;
                    cur_ll = next_ll;
                }
                ok
            }
            Move::Death if from > 0 => {
                let (log_a, prev, prev_ll) = death_ratio(target, inputs, &kernel, &state, cur_ll);
                let ok = accept(log_a, &mut rng);
                if ok {
                    state = prev;
                    cur_ll = prev_ll;
                }
                ok
            }
            // attempted moves off either end of the sequence are rejections
            _ => false,
        };
        let counts = trace.acceptance[from].counts(mv);
        counts.proposed += 1;
        counts.accepted += accepted as u64;
        trace.push(&state);
    }
    Ok(trace)
}

fn accept<R: Rng + ?Sized>(log_a: f64, rng: &mut R) -> bool {
    if log_a >= 0.0 {
        // still consume a uniform so the stream does not depend on the branch
        let _: f64 = rng.sample(Open01);
        return true;
    }
    let ua: f64 = rng.sample(Open01);
    ua.ln() < log_a
}

/// Posterior summaries from the post-burn-in part of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub samples: usize,
    pub visits: Vec<usize>,
    pub probs: Vec<f64>,
    pub probs_mcse: Vec<f64>,
    /// `None` for models that were never visited.
    pub sigma_mean: Vec<Option<f64>>,
    pub sigma_mcse: Vec<Option<f64>>,
    pub beta_mean: Vec<Option<Vec<f64>>>,
    pub beta_mcse: Vec<Option<Vec<f64>>>,
}

impl ChainSummary {
    pub fn visited(&self, k: usize) -> bool {
        self.visits[k] > 0
    }
}

/// Occupancy probabilities, per-model posterior means and Monte Carlo
/// standard errors. Standard errors of conditional means use the ratio
/// estimator linearization `1{K=k}(θ - θ̄_k) / p̂_k` together with its
/// integrated autocorrelation time.
pub fn estimate(trace: &ChainTrace) -> ChainSummary {
    let m = trace.dims.len();
    let start = trace.burn_in.min(trace.len());
    let ks = &trace.k[start..];
    let samples = ks.len();
    let nf = samples as f64;
    let mut visits = vec![0usize; m];
    for &k in ks {
        visits[k as usize] += 1;
    }
    let probs: Vec<f64> = visits.iter().map(|&v| v as f64 / nf).collect();

    let mcse_of = |series: &[f64]| -> f64 {
        let mean = series.iter().sum::<f64>() / nf;
        let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
        if var == 0.0 {
            return 0.0;
        }
        let tau = iat(series).unwrap_or(1.0).max(1.0);
        (var * tau / nf).sqrt()
    };

    let mut out = ChainSummary {
        samples,
        visits: visits.clone(),
        probs: probs.clone(),
        probs_mcse: Vec::with_capacity(m),
        sigma_mean: Vec::with_capacity(m),
        sigma_mcse: Vec::with_capacity(m),
        beta_mean: Vec::with_capacity(m),
        beta_mcse: Vec::with_capacity(m),
    };
    let mut series = vec![0.0; samples];
    for k in 0..m {
        for (s, &kk) in series.iter_mut().zip(ks) {
            *s = (kk as usize == k) as u8 as f64;
        }
        out.probs_mcse.push(mcse_of(&series));
        if visits[k] == 0 {
            out.sigma_mean.push(None);
            out.sigma_mcse.push(None);
            out.beta_mean.push(None);
            out.beta_mcse.push(None);
            continue;
        }
        let d = trace.dims[k];
        let value = |t: usize, j: usize| -> f64 {
            if j == 0 {
                trace.sigma[t]
            } else {
                trace.beta[t * trace.max_dim + j - 1]
            }
        };
        let mut means = vec![0.0; d + 1];
        for (off, &kk) in ks.iter().enumerate() {
            if kk as usize == k {
                for (j, mean) in means.iter_mut().enumerate() {
                    *mean += value(start + off, j);
                }
            }
        }
        means.iter_mut().for_each(|v| *v /= visits[k] as f64);
        let mut mcse = vec![0.0; d + 1];
        for (j, se) in mcse.iter_mut().enumerate() {
            for (off, (s, &kk)) in series.iter_mut().zip(ks).enumerate() {
                *s = if kk as usize == k {
                    (value(start + off, j) - means[j]) / probs[k]
                } else {
                    0.0
                };
            }
            *se = mcse_of(&series);
        }
        out.sigma_mean.push(Some(means[0]));
        out.sigma_mcse.push(Some(mcse[0]));
        out.beta_mean.push(Some(means[1..].to_vec()));
        out.beta_mcse.push(Some(mcse[1..].to_vec()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::normal_posterior::NormalPosteriorSummary;
    use crate::synthetic::{orthogonal_dataset, rng};
    use proptest::prelude::*;
    use rand::Rng;

    fn nested(d: usize) -> ModelSpace {
        ModelSpace::nested(&(1..d).collect::<Vec<_>>()).unwrap()
    }

    fn inputs_for(target: &Target, shift: f64) -> SamplerInputs {
        let m = target.n_models();
        SamplerInputs {
            vartheta: 0.6,
            ell: vec![0.1; m],
            shifts: (0..m)
                .map(|k| if k == 0 { Vec::new() } else { (0..=target.dim(k - 1)).map(|j| if j == 0 { 0.0 } else { shift * j as f64 }).collect() })
                .collect(),
            birth: (0..m)
                .map(|k| (k > 0).then_some(BirthProposal { location: 0.2, scale: 0.3 }))
                .collect(),
            kernel_rho: 0.95,
        }
    }

    fn random_state<R: Rng>(target: &Target, k: usize, r: &mut R) -> ParameterState {
        ParameterState {
            k,
            sigma: r.gen_range(0.3..2.0),
            beta: (0..target.dim(k)).map(|_| r.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn update_to_same_point_is_neutral() {
        let data = orthogonal_dataset(12, 3, 1);
        let target = Target::new(&nested(3), &data, ErrorModel::Lptn { rho: 0.95 }, None).unwrap();
        let s = ParameterState { k: 1, sigma: 0.8, beta: vec![0.1, 0.4] };
        assert_eq!(log_accept_update(&target, &s, s.sigma, &s.beta), 0.0);
        assert_eq!(log_accept_update(&target, &s, -0.1, &s.beta), f64::NEG_INFINITY);
        assert_eq!(log_accept_update(&target, &s, 0.0, &s.beta), f64::NEG_INFINITY);
    }

    #[test]
    fn likelihood_matches_scalar_evaluation() {
        let data = orthogonal_dataset(5, 2, 3);
        let p = LptnParams::new(0.95).unwrap();
        let target = Target::new(&nested(2), &data, ErrorModel::lptn(&p), None).unwrap();
        let (sigma, beta) = (0.7, [0.05, 0.3]);
        let mut direct = 0.0;
        for i in 0..5 {
            let r = data.y[i] - beta[0] - beta[1] * data.x[(i, 1)];
            direct += p.ln_pdf(r / sigma) - sigma.ln();
        }
        assert!((target.log_likelihood(1, sigma, &beta) - direct).abs() < 1e-12);
    }

    #[test]
    fn birth_then_death_cancels() {
        let data = orthogonal_dataset(15, 4, 2);
        let target = Target::new(&nested(4), &data, ErrorModel::Lptn { rho: 0.95 }, None).unwrap();
        let inputs = inputs_for(&target, 0.05);
        let kernel = LptnParams::new(0.95).unwrap();
        let mut r = rng(5);
        for k in 0..2 {
            let s = random_state(&target, k, &mut r);
            let u = r.gen_range(-1.0..1.0);
            let up = log_accept_birth(&target, &inputs, &kernel, &s, u);
            let next = birth_state(&inputs, &s, u);
            let down = log_accept_death(&target, &inputs, &kernel, &next);
            assert!((up + down).abs() < 1e-10, "{up} {down}");
        }
    }

    #[test]
    fn pure_update_chain_stays_in_model() {
        let data = orthogonal_dataset(20, 3, 4);
        let target = Target::new(&nested(3), &data, ErrorModel::Normal, None).unwrap();
        let inputs = SamplerInputs::random_walk(vec![0.2; 3], 0.95);
        let init = ParameterState { k: 1, sigma: 1.0, beta: vec![0.0, 0.0] };
        let trace = run_chain(&target, &inputs, Init::State(init), 2000, 100, 9).unwrap();
        assert!(trace.k.iter().all(|&k| k == 1));
        assert!(trace.update_acceptance() > 0.0);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let data = orthogonal_dataset(20, 3, 4);
        let target = Target::new(&nested(3), &data, ErrorModel::Lptn { rho: 0.95 }, None).unwrap();
        let inputs = inputs_for(&target, 0.0);
        let init = ParameterState { k: 0, sigma: 1.0, beta: vec![0.0] };
        let a = run_chain(&target, &inputs, Init::State(init.clone()), 3000, 100, 77).unwrap();
        let b = run_chain(&target, &inputs, Init::State(init), 3000, 100, 77).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn boundary_moves_are_rejections() {
        let data = orthogonal_dataset(20, 2, 4);
        let target = Target::new(&nested(2), &data, ErrorModel::Normal, None).unwrap();
        let inputs = inputs_for(&target, 0.0);
        let init = ParameterState { k: 0, sigma: 1.0, beta: vec![0.0] };
        let trace = run_chain(&target, &inputs, Init::State(init), 5000, 100, 3).unwrap();
        assert_eq!(trace.acceptance[0].death.accepted, 0);
        assert_eq!(trace.acceptance[1].birth.accepted, 0);
        assert!(trace.acceptance[0].death.proposed > 0 && trace.acceptance[1].birth.proposed > 0);
        let total: u64 = trace.acceptance.iter().map(|a| a.update.proposed + a.birth.proposed + a.death.proposed).sum();
        assert_eq!(total, 5000);
    }

    #[test]
    fn consecutive_states_differ_by_one_move() {
        let data = orthogonal_dataset(20, 3, 4);
        let target = Target::new(&nested(3), &data, ErrorModel::Lptn { rho: 0.95 }, None).unwrap();
        let inputs = inputs_for(&target, 0.01);
        let init = ParameterState { k: 0, sigma: 1.0, beta: vec![0.0] };
        let trace = run_chain(&target, &inputs, Init::State(init), 3000, 10, 1).unwrap();
        for t in 1..trace.len() {
            let (a, b) = (trace.k[t - 1] as i64, trace.k[t] as i64);
            assert!((a - b).abs() <= 1);
            if a == b && trace.sigma[t] != trace.sigma[t - 1] {
                // an update moves every component
                let (ra, rb) = (trace.beta_row(t - 1), trace.beta_row(t));
                assert!(ra[..trace.dims[a as usize]].iter().zip(rb).all(|(x, y)| x != y));
            }
        }
    }

    #[test]
    fn constant_and_alternating_traces() {
        let dims = vec![1, 2];
        let mk = |ks: Vec<u32>| {
            let t = ks.len();
            let beta = ks
                .iter()
                .flat_map(|&k| if k == 0 { vec![0.5, f64::NAN] } else { vec![0.5, 1.5] })
                .collect();
            ChainTrace {
                seed: 0,
                burn_in: 0,
                max_dim: 2,
                dims: dims.clone(),
                k: ks,
                sigma: vec![2.0; t],
                beta,
                acceptance: vec![Acceptance::default(); 2],
                initial: ParameterState { k: 0, sigma: 2.0, beta: vec![0.5] },
            }
        };
        let s = estimate(&mk(vec![1; 200]));
        assert_eq!(s.probs, vec![0.0, 1.0]);
        assert_eq!(s.beta_mean[1], Some(vec![0.5, 1.5]));
        assert_eq!(s.sigma_mean[1], Some(2.0));
        assert!(s.beta_mean[0].is_none());
        let s = estimate(&mk((0..200).map(|t| (t % 2) as u32).collect()));
        assert_eq!(s.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn drawn_start_has_positive_scale() {
        let dist = StartDistribution { sigma_mean: 0.01, sigma_sd: 1.0, beta_mean: vec![0.0], beta_sd: vec![1.0] };
        let mut r = rng(0);
        for _ in 0..1000 {
            assert!(draw_start(0, &dist, &mut r).sigma > 0.0);
        }
    }

    #[test]
    fn normal_chain_recovers_closed_form_probabilities() {
        let data = orthogonal_dataset(15, 2, 11);
        let space = nested(2);
        let exact = NormalPosteriorSummary::fit(&space, &data, None).unwrap();
        let target = Target::new(&space, &data, ErrorModel::Normal, None).unwrap();
        let inputs = SamplerInputs {
            vartheta: 0.6,
            ell: vec![0.15, 0.12],
            shifts: vec![Vec::new(), vec![0.0, 0.0]],
            birth: vec![None, Some(BirthProposal { location: exact.beta_hat[1][1], scale: exact.beta_sd(1)[1] })],
            kernel_rho: 0.95,
        };
        let init = ParameterState { k: 0, sigma: 1.0, beta: vec![0.0] };
        let trace = run_chain(&target, &inputs, Init::State(init), 60_000, 5_000, 21).unwrap();
        let est = estimate(&trace);
        for k in 0..2 {
            assert!((est.probs[k] - exact.model_probs[k]).abs() < 0.03, "{:?} vs {:?}", est.probs, exact.model_probs);
        }
    }

    proptest! {
        #[test]
        fn detailed_balance_identity(seed in 0u64..10_000, shift in -0.3f64..0.3) {
            let data = orthogonal_dataset(12, 4, 7);
            let target = Target::new(&nested(4), &data, ErrorModel::Lptn { rho: 0.95 }, Some(vec![0.0, -0.5, 0.3, 0.1])).unwrap();
            let inputs = inputs_for(&target, shift);
            let kernel = LptnParams::new(0.95).unwrap();
            let g = [inputs.vartheta, 0.5 * (1.0 - inputs.vartheta), 0.5 * (1.0 - inputs.vartheta)];
            let mut r = rng(seed);
            let k = r.gen_range(0..2usize);
            let x = random_state(&target, k, &mut r);
            let u = r.gen_range(-1.0..1.0);
            let xp = birth_state(&inputs, &x, u);
            let cap = |v: f64| v.min(0.0);
            let q = inputs.birth[k + 1].unwrap().ln_density(&kernel, u);
            let lhs = cap(log_accept_birth(&target, &inputs, &kernel, &x, u)) + target.log_posterior(&x) + g[1].ln() + q;
            let rhs = cap(log_accept_death(&target, &inputs, &kernel, &xp)) + target.log_posterior(&xp) + g[2].ln();
            prop_assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
        }

        #[test]
        fn update_ratio_is_antisymmetric(seed in 0u64..10_000) {
            let data = orthogonal_dataset(12, 3, 8);
            let target = Target::new(&nested(3), &data, ErrorModel::Lptn { rho: 0.95 }, None).unwrap();
            let mut r = rng(seed);
            let k = r.gen_range(0..3usize);
            let a = random_state(&target, k, &mut r);
            let b = random_state(&target, k, &mut r);
            let ab = log_accept_update(&target, &a, b.sigma, &b.beta);
            let ba = log_accept_update(&target, &b, a.sigma, &a.beta);
            prop_assert!((ab + ba).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_incomplete_inputs() {
        let data = orthogonal_dataset(12, 3, 8);
        let target = Target::new(&nested(3), &data, ErrorModel::Normal, None).unwrap();
        let mut inputs = inputs_for(&target, 0.0);
        inputs.birth[2] = None;
        assert!(inputs.validate(&target).is_err());
        let mut inputs = inputs_for(&target, 0.0);
        inputs.shifts[1][0] = 0.1;
        assert!(inputs.validate(&target).is_err());
        let init = ParameterState { k: 0, sigma: 1.0, beta: vec![0.0] };
        assert!(run_chain(&target, &inputs_for(&target, 0.0), Init::State(init), 10, 10, 0).is_err());
        let bad = ParameterState { k: 1, sigma: 1.0, beta: vec![0.0] };
        assert!(run_chain(&target, &inputs_for(&target, 0.0), Init::State(bad), 10, 1, 0).is_err());
        let _ = ModelSpec::intercept();
    }
}
