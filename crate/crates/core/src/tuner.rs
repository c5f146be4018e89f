//! Trial runs that configure the reversible-jump sampler.
//!
//! For every model a random-walk Metropolis scaling giving about 23.4%
//! acceptance is found first. The sampler is then run on a geometric grid of
//! scalings around it, and the scaling with the smallest summed integrated
//! autocorrelation time is kept (the grid is moved when the winner sits on an
//! end point). Posterior means and standard deviations averaged over the grid
//! define the birth proposals and the parameter shifts between models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lptn::LptnParams;
use crate::model::{Dataset, ModelSpace, ModelSpec};
use crate::rj::{self, BirthProposal, ErrorModel, Init, ParameterState, SamplerInputs, StartDistribution, Target};
use crate::robust::RobustFit;

pub const MIN_IAT_LENGTH: usize = 100;

/// Integrated autocorrelation time `1 + 2 Σ ρ̂(t)`, summing lags until the
/// first nonpositive autocorrelation estimate.
pub fn iat(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_IAT_LENGTH {
        return Err(Error::SeriesTooShort {
            len: n,
            min: MIN_IAT_LENGTH,
        });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>();
    if !(c0 > 0.0) || c0 <= 1e-28 * mean * mean * n as f64 {
        return Err(Error::ConstantSeries);
    }
    let mut sum = 0.0;
    for lag in 1..n {
        let c: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum();
        let rho = c / c0;
        if rho <= 0.0 {
            break;
        }
        sum += rho;
    }
    Ok(1.0 + 2.0 * sum)
}

/// SplitMix64 finalizer applied along `path`, giving decorrelated seeds for
/// parallel runs that do not depend on scheduling.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningOptions {
    pub target_acceptance: f64,
    pub acceptance_tolerance: f64,
    pub probe_iterations: usize,
    pub max_bisection_steps: usize,
    pub grid_size: usize,
    pub grid_ratio: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub max_regrids: usize,
    pub kernel_rho: f64,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            target_acceptance: 0.234,
            acceptance_tolerance: 0.05,
            probe_iterations: 10_000,
            max_bisection_steps: 30,
            grid_size: 11,
            grid_ratio: 1.3,
            iterations: 100_000,
            burn_in: 10_000,
            max_regrids: 3,
            kernel_rho: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub ell: f64,
    pub acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSearch {
    pub ell: f64,
    pub acceptance: f64,
    /// Every probe in evaluation order.
    pub probes: Vec<Probe>,
}

fn single_model_target(model: &ModelSpec, data: &Dataset, error_model: ErrorModel) -> Result<Target> {
    Target::new(&ModelSpace::new(vec![model.clone()])?, data, error_model, None)
}

fn probe_acceptance(target: &Target, init: &ParameterState, ell: f64, opts: &TuningOptions, seed: u64) -> Result<f64> {
    let inputs = SamplerInputs::random_walk(vec![ell], opts.kernel_rho);
    let trace = rj::run_chain(target, &inputs, Init::State(init.clone()), opts.probe_iterations, 0, seed)?;
    Ok(trace.update_acceptance())
}

/// Bisection on `log ℓ` until a probe run accepts within
/// `target ± tolerance`. The first guess is `2.38 σ / sqrt(n (d + 1))`, the
/// usual optimal random-walk scale for a posterior with standard deviations
/// of order `σ / sqrt(n)`.
pub fn find_start_scaling(
    model: &ModelSpec,
    data: &Dataset,
    error_model: ErrorModel,
    fit: &RobustFit,
    opts: &TuningOptions,
    seed: u64,
) -> Result<ScalingSearch> {
    let target = single_model_target(model, data, error_model)?;
    let init = ParameterState {
        k: 0,
        sigma: fit.sigma,
        beta: fit.beta.iter().copied().collect(),
    };
    let d = model.dim() as f64;
    let mut ell = 2.38 * fit.sigma / (data.n() as f64 * (d + 1.0)).sqrt();
    let mut probes = Vec::new();
    let (mut lo, mut hi): (Option<f64>, Option<f64>) = (None, None);
    for step in 0..opts.max_bisection_steps {
        let acc = probe_acceptance(&target, &init, ell, opts, derive_seed(seed, &[step as u64]))?;
        probes.push(Probe { ell, acceptance: acc });
        if (acc - opts.target_acceptance).abs() <= opts.acceptance_tolerance {
            return Ok(ScalingSearch {
                ell,
                acceptance: acc,
                probes,
            });
        }
        // acceptance decreases with ℓ
        if acc > opts.target_acceptance {
            lo = Some(ell);
        } else {
            hi = Some(ell);
        }
        ell = match (lo, hi) {
            (Some(a), Some(b)) => (a * b).sqrt(),
            (Some(a), None) => a * 4.0,
            (None, Some(b)) => b / 4.0,
            (None, None) => unreachable!(),
        };
    }
    Err(Error::ScalingSearch {
        steps: opts.max_bisection_steps,
        low: lo.unwrap_or(f64::NAN),
        high: hi.unwrap_or(f64::NAN),
        acceptance: probes.last().map_or(f64::NAN, |p| p.acceptance),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub ell: f64,
    pub acceptance: f64,
    /// IAT of σ followed by each coefficient; infinite when a series never moved.
    pub iats: Vec<f64>,
    pub iat_sum: f64,
    pub sigma_mean: f64,
    pub sigma_sd: f64,
    pub beta_mean: Vec<f64>,
    pub beta_sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub columns: Vec<usize>,
    pub start: ScalingSearch,
    pub ell_opt: f64,
    pub regrids: usize,
    /// The final grid, in increasing ℓ.
    pub grid: Vec<GridPoint>,
    pub m_sigma: f64,
    pub s_sigma: f64,
    pub m_beta: Vec<f64>,
    pub s_beta: Vec<f64>,
}

impl TuningResult {
    pub fn start_distribution(&self) -> StartDistribution {
        StartDistribution {
            sigma_mean: self.m_sigma,
            sigma_sd: self.s_sigma,
            beta_mean: self.m_beta.clone(),
            beta_sd: self.s_beta.clone(),
        }
    }

    pub fn acceptance_curve(&self) -> Vec<(f64, f64)> {
        self.grid.iter().map(|g| (g.ell, g.acceptance)).collect()
    }

    pub fn iat_curve(&self) -> Vec<(f64, f64)> {
        self.grid.iter().map(|g| (g.ell, g.iat_sum)).collect()
    }
}

/// Starting state for a grid run: `σ² ~ Inv-Gamma((n - d)/2, rss/2)` with
/// the residual sum of squares of the preliminary fit, the intercept from
/// `N(β̂₁, σ²/n)` and other coefficients from `N(β̂_j, σ²/(n-1))`.
pub fn initial_state(fit: &RobustFit, data: &Dataset, model: &ModelSpec, rng: &mut ChaCha8Rng) -> Result<ParameterState> {
    let n = data.n() as f64;
    let d = model.dim();
    let x = data.design(model);
    let rss = fit.residuals(&x, &data.y).norm_squared();
    let shape = 0.5 * (n - d as f64);
    let gamma = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let sigma2 = 0.5 * rss / gamma.sample(rng);
    let sigma = sigma2.sqrt();
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::DegenerateModel { n: data.n(), dim: d });
    }
    let beta = fit
        .beta
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let var = sigma2 / if j == 0 { n } else { n - 1.0 };
            Normal::new(b, var.sqrt()).expect("finite parameters").sample(rng)
        })
        .collect();
    Ok(ParameterState { k: 0, sigma, beta })
}

fn grid_run(
    target: &Target,
    model: &ModelSpec,
    data: &Dataset,
    fit: &RobustFit,
    ell: f64,
    opts: &TuningOptions,
    seed: u64,
) -> Result<GridPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = initial_state(fit, data, model, &mut rng)?;
    let inputs = SamplerInputs::random_walk(vec![ell], opts.kernel_rho);
    let run_seed = derive_seed(seed, &[1]);
    let trace = rj::run_chain(target, &inputs, Init::State(init), opts.iterations, opts.burn_in, run_seed)?;
    let d = model.dim();
    let b = opts.burn_in;
    let series = |j: usize| -> Vec<f64> {
        if j == 0 {
            trace.sigma[b..].to_vec()
        } else {
            (b..trace.len()).map(|t| trace.beta[t * trace.max_dim + j - 1]).collect()
        }
    };
    let mut iats = Vec::with_capacity(d + 1);
    let mut means = Vec::with_capacity(d + 1);
    let mut sds = Vec::with_capacity(d + 1);
    for j in 0..=d {
        let s = series(j);
        let (m, sd) = crate::pca::mean_sd(&s);
        means.push(m);
        sds.push(sd);
        iats.push(match iat(&s) {
            Ok(v) => v,
            Err(Error::ConstantSeries) => f64::INFINITY,
            Err(e) => return Err(e),
        });
    }
    Ok(GridPoint {
        ell,
        acceptance: trace.update_acceptance(),
        iat_sum: iats.iter().sum(),
        iats,
        sigma_mean: means[0],
        sigma_sd: sds[0],
        beta_mean: means[1..].to_vec(),
        beta_sd: sds[1..].to_vec(),
    })
}

/// Scaling search, grid runs, IAT-based selection and grid-averaged
/// location/scale summaries for one model. `fit` is a preliminary MAP fit of
/// the model, used to initialize every run.
pub fn tune_model(
    model: &ModelSpec,
    data: &Dataset,
    error_model: ErrorModel,
    fit: &RobustFit,
    opts: &TuningOptions,
    seed: u64,
) -> Result<TuningResult> {
    if data.n() <= model.dim() {
        return Err(Error::DegenerateModel {
            n: data.n(),
            dim: model.dim(),
        });
    }
    if opts.grid_size < 3 {
        return Err(Error::InvalidInput("the scaling grid needs at least 3 points".into()));
    }
    let target = single_model_target(model, data, error_model)?;
    let start = find_start_scaling(model, data, error_model, fit, opts, derive_seed(seed, &[0]))?;
    let half = (opts.grid_size / 2) as i32;
    let mut center = start.ell;
    let mut regrids = 0;
    loop {
        let ells: Vec<f64> = (0..opts.grid_size as i32)
            .map(|j| center * opts.grid_ratio.powi(j - half))
            .collect();
        let grid: Vec<GridPoint> = ells
            .par_iter()
            .enumerate()
            .map(|(j, &ell)| {
                let s = derive_seed(seed, &[1, regrids as u64, j as u64]);
                grid_run(&target, model, data, fit, ell, opts, s)
            })
            .collect::<Result<_>>()?;
        let best = (0..grid.len())
            .min_by(|&a, &b| grid[a].iat_sum.total_cmp(&grid[b].iat_sum))
            .expect("nonempty grid");
        let on_edge = best == 0 || best == grid.len() - 1;
        if on_edge {
            if regrids == opts.max_regrids {
                return Err(Error::GridEndpoint {
                    regrids,
                    iat_curve: grid.iter().map(|g| (g.ell, g.iat_sum)).collect(),
                });
            }
            log::debug!("model {:?}: best scaling on the grid edge, moving the grid", model.columns());
            center = grid[best].ell;
            regrids += 1;
            continue;
        }
        let l = grid.len() as f64;
        let avg = |f: &dyn Fn(&GridPoint) -> f64| grid.iter().map(f).sum::<f64>() / l;
        let d = model.dim();
        return Ok(TuningResult {
            columns: model.columns().to_vec(),
            ell_opt: grid[best].ell,
            regrids,
            m_sigma: avg(&|g| g.sigma_mean),
            s_sigma: avg(&|g| g.sigma_sd),
            m_beta: (0..d).map(|i| avg(&|g| g.beta_mean[i])).collect(),
            s_beta: (0..d).map(|i| avg(&|g| g.beta_sd[i])).collect(),
            grid,
            start,
        });
    }
}

/// Sampler inputs for a nested space from per-model tuning results:
/// `c_j = (0, m_{1,j} - m_{1,j-1}, …)`, birth proposals `LPTN(m_{d_j,j},
/// s_{d_j,j})`, and `ℓ_j = ℓ_j^opt`.
pub fn assemble_inputs(results: &[TuningResult], vartheta: f64, kernel_rho: f64) -> Result<SamplerInputs> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no tuning results".into()));
    }
    let mut shifts = vec![Vec::new()];
    let mut birth = vec![None];
    for j in 1..results.len() {
        let (prev, cur) = (&results[j - 1], &results[j]);
        if cur.m_beta.len() != prev.m_beta.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "tuning results {} and {} are not consecutive nested models",
                j - 1,
                j
            )));
        }
        let mut c = vec![0.0];
        c.extend(prev.m_beta.iter().zip(&cur.m_beta).map(|(a, b)| b - a));
        shifts.push(c);
        birth.push(Some(BirthProposal {
            location: *cur.m_beta.last().expect("nonempty"),
            scale: *cur.s_beta.last().expect("nonempty"),
        }));
    }
    Ok(SamplerInputs {
        vartheta,
        ell: results.iter().map(|r| r.ell_opt).collect(),
        shifts,
        birth,
        kernel_rho,
    })
}

/// LPTN parameters of the update kernel implied by `opts`.
pub fn kernel(opts: &TuningOptions) -> Result<LptnParams> {
    LptnParams::new(opts.kernel_rho)
}
