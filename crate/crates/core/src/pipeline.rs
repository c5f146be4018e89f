//! The two-step analysis: Bayes-factor screening of individual components
//! against the intercept-only model, then a reversible-jump run over the
//! nested sequence of retained components and model-averaged prediction.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lptn::LptnParams;
use crate::model::{Dataset, ModelSpace, ModelSpec};
use crate::normal_posterior::{self, NormalPosteriorSummary};
use crate::pca::{self, ColumnStats, PairFlags, Path, PcaResult, RobustCorrelationOptions, Standardization};
use crate::rj::{self, Acceptance, ChainSummary, ChainTrace, ErrorModel, Init, Target};
use crate::robust::{self, ResidualReport, RobustFit};
use crate::tuner::{self, derive_seed, TuningOptions, TuningResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub rho: f64,
    pub variance_cap: f64,
    pub bf_threshold: f64,
    pub vartheta: f64,
    pub tuning: TuningOptions,
    pub iterations: usize,
    pub burn_in: usize,
    pub outlier_threshold: f64,
    pub clip_correlations: bool,
    /// Use the exact normal-error posterior (orthogonal designs only) instead
    /// of sampling on the normal path.
    pub normal_closed_form: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            variance_cap: pca::DEFAULT_VARIANCE_CAP,
            bf_threshold: 1.0,
            vartheta: 0.6,
            tuning: TuningOptions::default(),
            iterations: 1_000_000,
            burn_in: 100_000,
            outlier_threshold: robust::DEFAULT_OUTLIER_THRESHOLD,
            clip_correlations: true,
            normal_closed_form: true,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Domain { name, value: v, range: "(0, 1]" })
            }
        };
        unit("variance_cap", self.variance_cap)?;
        unit("vartheta", self.vartheta)?;
        LptnParams::new(self.rho)?;
        LptnParams::new(self.tuning.kernel_rho)?;
        if !(self.bf_threshold > 0.0) {
            return Err(Error::Domain { name: "bf_threshold", value: self.bf_threshold, range: "(0, ∞)" });
        }
        if !(self.outlier_threshold > 0.0) {
            return Err(Error::Domain { name: "outlier_threshold", value: self.outlier_threshold, range: "(0, ∞)" });
        }
        for (what, t, b) in [
            ("main run", self.iterations, self.burn_in),
            ("tuning runs", self.tuning.iterations, self.tuning.burn_in),
        ] {
            if !(t > b && b > 0) {
                return Err(Error::InvalidInput(format!(
                    "{what}: need iterations > burn-in > 0, got {t} and {b}"
                )));
            }
        }
        Ok(())
    }

    fn lptn(&self) -> LptnParams {
        LptnParams::new(self.rho).expect("validated")
    }

    fn error_model(&self, path: Path) -> ErrorModel {
        match path {
            Path::Robust => ErrorModel::Lptn { rho: self.rho },
            Path::Normal => ErrorModel::Normal,
        }
    }

    fn uses_closed_form(&self, path: Path) -> bool {
        path == Path::Normal && self.normal_closed_form
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Standardization,
    Pca,
    Screening,
    Tuning,
    Sampling,
    Prediction,
    Residuals,
}

/// An error together with the pipeline stage that produced it.
#[derive(Debug, thiserror::Error)]
#[error("{stage:?} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

fn path_tag(path: Path) -> u64 {
    match path {
        Path::Normal => 1,
        Path::Robust => 2,
    }
}

const STAGE_TUNING: u64 = 1;
const STAGE_SCREENING: u64 = 2;
const STAGE_MAIN: u64 = 3;

/// Standardized training data and the PCA that produced its regressors.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub path: Path,
    pub pca: PcaResult,
    pub pair_flags: Vec<PairFlags>,
    pub y_stats: ColumnStats,
    pub data: Dataset,
}

impl Prepared {
    /// Design rows (intercept first) for new raw covariates.
    pub fn design_for(&self, c_raw_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z = self.pca.transform(c_raw_new)?;
        let mut x = DMatrix::from_element(z.nrows(), z.ncols() + 1, 1.0);
        x.columns_mut(1, z.ncols()).copy_from(&z);
        Ok(x)
    }

    pub fn destandardize_y(&self, v: f64) -> f64 {
        self.y_stats.location + self.y_stats.scale * v
    }
}

/// Standardizes `y` and the covariates along `path` and builds the design
/// from the retained component scores.
pub fn prepare(c_raw: &DMatrix<f64>, y_raw: &DVector<f64>, path: Path, cfg: &PipelineConfig) -> StageResult<Prepared> {
    cfg.validate().at(Stage::Standardization)?;
    if y_raw.len() != c_raw.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses for {} covariate rows",
            y_raw.len(),
            c_raw.nrows()
        )))
        .at(Stage::Standardization);
    }
    let p = cfg.lptn();
    let mode = match path {
        Path::Normal => Standardization::Sample,
        Path::Robust => Standardization::Robust(p),
    };
    let (y_std, y_stats) = pca::standardize(&DMatrix::from_column_slice(y_raw.len(), 1, y_raw.as_slice()), mode)
        .map_err(|e| match e {
            Error::DegenerateScale { .. } => Error::InvalidInput("the response is constant".into()),
            other => other,
        })
        .at(Stage::Standardization)?;
    let opts = RobustCorrelationOptions {
        clip: cfg.clip_correlations,
        outlier_threshold: cfg.outlier_threshold,
    };
    let (pca, pair_flags) = pca::fit_with(c_raw, path, &p, cfg.variance_cap, opts).at(Stage::Pca)?;
    let data = Dataset::from_scores(y_std.column(0).into_owned(), &pca.retained_scores()).at(Stage::Pca)?;
    Ok(Prepared {
        path,
        pca,
        pair_flags,
        y_stats: y_stats[0],
        data,
    })
}

/// Preliminary fit that seeds tuning: the LPTN MAP on the robust path, least
/// squares with the unbiased scale on the normal path.
pub fn preliminary_fit(model: &ModelSpec, data: &Dataset, error_model: ErrorModel) -> Result<RobustFit> {
    let x = data.design(model);
    match error_model {
        ErrorModel::Lptn { rho } => robust::map_regression(&x, &data.y, &LptnParams::new(rho)?),
        ErrorModel::Normal => {
            let (n, d) = (data.n(), model.dim());
            if n <= d {
                return Err(Error::DegenerateModel { n, dim: d });
            }
            let beta = robust::least_squares(&x, &data.y)?;
            let rss = (&data.y - &x * &beta).norm_squared();
            let sigma = (rss / (n - d) as f64).sqrt();
            if !(sigma > 0.0) {
                return Err(Error::ExactFit { model: model.columns().to_vec() });
            }
            Ok(RobustFit {
                beta,
                sigma,
                converged: true,
                objective: f64::NAN,
                iterations: 0,
            })
        }
    }
}

/// Tuning results keyed by model index set. Each model is tuned once with a
/// seed derived from its columns, so results do not depend on which stage or
/// thread asks first.
#[derive(Debug, Default, Clone)]
pub struct TuningCache {
    results: HashMap<Vec<usize>, TuningResult>,
}

impl TuningCache {
    pub fn get(&self, model: &ModelSpec) -> Option<&TuningResult> {
        self.results.get(model.columns())
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn results(&self) -> impl Iterator<Item = &TuningResult> {
        self.results.values()
    }

    /// Tunes every model of `models` not yet cached, in parallel.
    pub fn ensure(&mut self, models: &[ModelSpec], data: &Dataset, path: Path, cfg: &PipelineConfig) -> Result<()> {
        let mut missing: Vec<&ModelSpec> = models.iter().filter(|m| self.get(m).is_none()).collect();
        missing.sort_by(|a, b| a.columns().cmp(b.columns()));
        missing.dedup();
        let error_model = cfg.error_model(path);
        let tuned: Vec<TuningResult> = missing
            .par_iter()
            .map(|m| {
                let fit = preliminary_fit(m, data, error_model)?;
                let mut key = vec![path_tag(path), STAGE_TUNING];
                key.extend(m.columns().iter().map(|&c| c as u64));
                let res = tuner::tune_model(m, data, error_model, &fit, &cfg.tuning, derive_seed(cfg.seed, &key))?;
                log::info!("tuned model {:?}: ℓ = {:.4e} after {} re-grids", m.columns(), res.ell_opt, res.regrids);
                Ok(res)
            })
            .collect::<Result<_>>()?;
        for r in tuned {
            self.results.insert(r.columns.clone(), r);
        }
        Ok(())
    }

    fn inputs_for(&self, space: &ModelSpace, cfg: &PipelineConfig) -> Result<rj::SamplerInputs> {
        let results: Vec<TuningResult> = space
            .models()
            .iter()
            .map(|m| self.get(m).cloned().ok_or_else(|| Error::InvalidInput(format!("model {:?} is not tuned", m.columns()))))
            .collect::<Result<_>>()?;
        tuner::assemble_inputs(&results, cfg.vartheta, cfg.tuning.kernel_rho)
    }

    fn starts_for(&self, space: &ModelSpace) -> Vec<rj::StartDistribution> {
        space.models().iter().map(|m| self.get(m).expect("tuned").start_distribution()).collect()
    }
}

/// Which model of a screening pair the chain never entered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeverVisited {
    /// The Bayes factor is an upper bound `1/T`.
    Extended,
    /// The Bayes factor is a lower bound `T`.
    Intercept,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Sampler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningEntry {
    /// Design column of the component; component `j` is the j-th PC.
    pub component: usize,
    pub bayes_factor: f64,
    pub retained: bool,
    pub never_visited: Option<NeverVisited>,
    pub method: Method,
    /// Post-burn-in iterations spent in `{intercept}` and `{intercept, j}`.
    pub visits: Option<[usize; 2]>,
    pub acceptance: Option<Vec<Acceptance>>,
    pub ell: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub threshold: f64,
    pub entries: Vec<ScreeningEntry>,
}

impl ScreeningReport {
    /// Retained design columns in component order.
    pub fn retained(&self) -> Vec<usize> {
        self.entries.iter().filter(|e| e.retained).map(|e| e.component).collect()
    }
}

/// Bayes factor of `{1, j}` against `{1}` from chain occupancy, under a
/// uniform model prior (prior odds 1). A model never entered yields the
/// bound `1/T` or `T` and a flag.
pub fn occupancy_bayes_factor(visits: [usize; 2]) -> (f64, Option<NeverVisited>) {
    let t = (visits[0] + visits[1]) as f64;
    match visits {
        [_, 0] => (1.0 / t, Some(NeverVisited::Extended)),
        [0, _] => (t, Some(NeverVisited::Intercept)),
        [a, b] => (b as f64 / a as f64, None),
    }
}

fn screening_space(j: usize) -> Result<ModelSpace> {
    ModelSpace::new(vec![ModelSpec::intercept(), ModelSpec::intercept().extended(j)?])
}

/// Screens a single component. `cache` must already hold both models of the
/// pair when sampling.
pub fn screen_component(j: usize, data: &Dataset, path: Path, cfg: &PipelineConfig, cache: &TuningCache) -> Result<ScreeningEntry> {
    let space = screening_space(j)?;
    if cfg.uses_closed_form(path) {
        let s = NormalPosteriorSummary::fit(&space, data, None)?;
        let bf = (s.model_log_weights[1] - s.model_log_weights[0]).exp();
        return Ok(ScreeningEntry {
            component: j,
            bayes_factor: bf,
            retained: bf > cfg.bf_threshold,
            never_visited: None,
            method: Method::ClosedForm,
            visits: None,
            acceptance: None,
            ell: None,
        });
    }
    let target = Target::new(&space, data, cfg.error_model(path), None)?;
    let inputs = cache.inputs_for(&space, cfg)?;
    let seed = derive_seed(cfg.seed, &[path_tag(path), STAGE_SCREENING, j as u64]);
    let trace = rj::run_chain(
        &target,
        &inputs,
        Init::Draw(cache.starts_for(&space)),
        cfg.tuning.iterations,
        cfg.tuning.burn_in,
        seed,
    )?;
    let summary = rj::estimate(&trace);
    let visits = [summary.visits[0], summary.visits[1]];
    let (bf, never_visited) = occupancy_bayes_factor(visits);
    Ok(ScreeningEntry {
        component: j,
        bayes_factor: bf,
        retained: bf > cfg.bf_threshold,
        never_visited,
        method: Method::Sampler,
        visits: Some(visits),
        acceptance: Some(trace.acceptance.clone()),
        ell: Some(inputs.ell),
    })
}

/// Compares each component model `{1, j}` with `{1}`, in parallel.
pub fn screen_components(data: &Dataset, path: Path, cfg: &PipelineConfig, cache: &mut TuningCache) -> Result<ScreeningReport> {
    let d = data.d();
    if d < 2 {
        return Err(Error::InvalidInput("screening needs at least one component".into()));
    }
    if !cfg.uses_closed_form(path) {
        let mut models = vec![ModelSpec::intercept()];
        for j in 1..d {
            models.push(ModelSpec::intercept().extended(j)?);
        }
        cache.ensure(&models, data, path, cfg)?;
    }
    let cache = &*cache;
    let entries = (1..d)
        .into_par_iter()
        .map(|j| screen_component(j, data, path, cfg, cache))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScreeningReport {
        threshold: cfg.bf_threshold,
        entries,
    })
}

/// `{1}, {1, j₁}, …, {1, j₁, …, j_q*}` from the retained components.
pub fn build_nested_space(report: &ScreeningReport) -> ModelSpace {
    ModelSpace::nested(&report.retained()).expect("retained components are distinct and positive")
}

/// Posterior over the nested space: model probabilities and per-model
/// coefficient means on the standardized scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorFit {
    pub method: Method,
    pub models: Vec<Vec<usize>>,
    pub probs: Vec<f64>,
    pub probs_mcse: Option<Vec<f64>>,
    /// Posterior means; for a model the chain never visited, its MAP fit.
    pub beta_mean: Vec<Vec<f64>>,
    pub beta_mcse: Option<Vec<Option<Vec<f64>>>>,
    pub sigma_mean: Vec<f64>,
    pub acceptance: Option<Vec<Acceptance>>,
    pub ell: Option<Vec<f64>>,
}

/// Runs the main chain (or the closed form) over `space`.
pub fn fit_posterior(
    space: &ModelSpace,
    data: &Dataset,
    path: Path,
    cfg: &PipelineConfig,
    cache: &mut TuningCache,
) -> StageResult<(PosteriorFit, Option<ChainTrace>)> {
    let models: Vec<Vec<usize>> = space.models().iter().map(|m| m.columns().to_vec()).collect();
    if cfg.uses_closed_form(path) {
        let s = NormalPosteriorSummary::fit(space, data, None).at(Stage::Sampling)?;
        let sigma_mean = (0..space.len()).map(|k| s.sigma_mean(k)).collect();
        return Ok((
            PosteriorFit {
                method: Method::ClosedForm,
                models,
                probs: s.model_probs.clone(),
                probs_mcse: None,
                beta_mean: s.beta_hat.iter().map(|b| b.iter().copied().collect()).collect(),
                beta_mcse: None,
                sigma_mean,
                acceptance: None,
                ell: None,
            },
            None,
        ));
    }
    cache.ensure(space.models(), data, path, cfg).at(Stage::Tuning)?;
    let target = Target::new(space, data, cfg.error_model(path), None).at(Stage::Sampling)?;
    let inputs = cache.inputs_for(space, cfg).at(Stage::Sampling)?;
    let seed = derive_seed(cfg.seed, &[path_tag(path), STAGE_MAIN]);
    let trace = rj::run_chain(&target, &inputs, Init::Draw(cache.starts_for(space)), cfg.iterations, cfg.burn_in, seed)
        .at(Stage::Sampling)?;
    let summary: ChainSummary = rj::estimate(&trace);
    let mut beta_mean = Vec::with_capacity(space.len());
    let mut sigma_mean = Vec::with_capacity(space.len());
    for (k, m) in space.models().iter().enumerate() {
        match (&summary.beta_mean[k], summary.sigma_mean[k]) {
            (Some(b), Some(s)) => {
                beta_mean.push(b.clone());
                sigma_mean.push(s);
            }
            _ => {
                // carries no weight in the average; keep a sensible per-model value
                let fit = preliminary_fit(m, data, cfg.error_model(path)).at(Stage::Sampling)?;
                beta_mean.push(fit.beta.iter().copied().collect());
                sigma_mean.push(fit.sigma);
            }
        }
    }
    Ok((
        PosteriorFit {
            method: Method::Sampler,
            models,
            probs: summary.probs.clone(),
            probs_mcse: Some(summary.probs_mcse.clone()),
            beta_mean,
            beta_mcse: Some(summary.beta_mcse.clone()),
            sigma_mean,
            acceptance: Some(trace.acceptance.clone()),
            ell: Some(inputs.ell.clone()),
        },
        Some(trace),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Model-averaged prediction on the original response scale.
    pub averaged: f64,
    pub per_model: Vec<f64>,
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub model_probs: Vec<f64>,
    pub predictions: Vec<Prediction>,
    /// Mean absolute deviation from the truth.
    pub aad: Option<f64>,
    /// Fraction of predictions with the sign of the truth.
    pub sign_rate: Option<f64>,
}

/// `(AAD, sign rate)` of predictions against the truth.
pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} predictions for {} true values", pred.len(), truth.len())));
    }
    let n = pred.len() as f64;
    let aad = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p.signum() == t.signum()).count();
    Ok((aad, hits as f64 / n))
}

/// Model-averaged predictions `Σ_k π(k|y) x_kᵀ β̄_k` for design rows `x_new`
/// (intercept first), de-standardized with the training response scale.
pub fn predict(prepared: &Prepared, fit: &PosteriorFit, x_new: &DMatrix<f64>, truth: Option<&[f64]>) -> Result<PredictionReport> {
    if let Some(t) = truth {
        if t.len() != x_new.nrows() {
            return Err(Error::DimensionMismatch(format!("{} true values for {} rows", t.len(), x_new.nrows())));
        }
    }
    let space = ModelSpace::new(fit.models.iter().map(|c| ModelSpec::new(c.clone())).collect::<Result<_>>()?)?;
    let betas: Vec<DVector<f64>> = fit.beta_mean.iter().map(|b| DVector::from_column_slice(b)).collect();
    let mut predictions = Vec::with_capacity(x_new.nrows());
    for i in 0..x_new.nrows() {
        let row: Vec<f64> = x_new.row(i).iter().copied().collect();
        let std_preds = normal_posterior::per_model_predictions(&space, &betas, &row)?;
        let averaged: f64 = std_preds.iter().zip(&fit.probs).map(|(p, w)| p * w).sum();
        predictions.push(Prediction {
            averaged: prepared.destandardize_y(averaged),
            per_model: std_preds.iter().map(|&v| prepared.destandardize_y(v)).collect(),
            truth: truth.map(|t| t[i]),
        });
    }
    let (aad, sign_rate) = match truth {
        Some(t) => {
            let p: Vec<f64> = predictions.iter().map(|p| p.averaged).collect();
            let (a, s) = metrics(&p, t)?;
            (Some(a), Some(s))
        }
        None => (None, None),
    };
    Ok(PredictionReport {
        model_probs: fit.probs.clone(),
        predictions,
        aad,
        sign_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResiduals {
    pub model: Vec<usize>,
    pub residuals: ResidualReport,
}

/// Standardized residuals and `|z| > threshold` flags of every model in the
/// space, from its preliminary fit on `data`.
pub fn flag_outliers_full(space: &ModelSpace, data: &Dataset, path: Path, cfg: &PipelineConfig) -> Result<Vec<ModelResiduals>> {
    space
        .models()
        .par_iter()
        .map(|m| {
            let fit = preliminary_fit(m, data, cfg.error_model(path))?;
            let residuals = robust::standardized_residuals(&fit, &data.design(m), &data.y, cfg.outlier_threshold)?;
            Ok(ModelResiduals {
                model: m.columns().to_vec(),
                residuals,
            })
        })
        .collect()
}

/// Everything one pass of the analysis produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub prepared: Prepared,
    pub screening: ScreeningReport,
    pub space: ModelSpace,
    pub posterior: PosteriorFit,
    pub trace: Option<ChainTrace>,
    pub prediction: Option<PredictionReport>,
    pub residuals: Vec<ModelResiduals>,
    pub tuning: Vec<TuningResult>,
}

/// New observations to predict: raw covariates and, optionally, the truth.
#[derive(Debug, Clone)]
pub struct NewData<'a> {
    pub covariates: &'a DMatrix<f64>,
    pub truth: Option<&'a [f64]>,
}

/// Standardization, PCA, screening, nested-model posterior, residual flags and
/// (when `new` is given) prediction.
pub fn run(c_raw: &DMatrix<f64>, y_raw: &DVector<f64>, new: Option<NewData<'_>>, path: Path, cfg: &PipelineConfig) -> StageResult<PipelineOutput> {
    let prepared = prepare(c_raw, y_raw, path, cfg)?;
    let mut cache = TuningCache::default();
    let screening = screen_components(&prepared.data, path, cfg, &mut cache).map_err(|source| {
        let stage = match source {
            Error::ScalingSearch { .. } | Error::GridEndpoint { .. } => Stage::Tuning,
            _ => Stage::Screening,
        };
        StageError { stage, source }
    })?;
    let space = build_nested_space(&screening);
    log::info!("retained components {:?}", screening.retained());
    let (posterior, trace) = fit_posterior(&space, &prepared.data, path, cfg, &mut cache)?;
    let residuals = flag_outliers_full(&space, &prepared.data, path, cfg).at(Stage::Residuals)?;
    let prediction = match new {
        Some(nd) => {
            let x = prepared.design_for(nd.covariates).at(Stage::Prediction)?;
            Some(predict(&prepared, &posterior, &x, nd.truth).at(Stage::Prediction)?)
        }
        None => None,
    };
    let mut tuning: Vec<TuningResult> = cache.results().cloned().collect();
    tuning.sort_by(|a, b| a.columns.cmp(&b.columns));
    Ok(PipelineOutput {
        prepared,
        screening,
        space,
        posterior,
        trace,
        prediction,
        residuals,
        tuning,
    })
}
