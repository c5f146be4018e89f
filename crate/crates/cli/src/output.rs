//! Report assembly and file output for `robpcr run`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path as FsPath;

use robpcr::pca::{self, ColumnStats, PairFlags, Path};
use robpcr::pipeline::{self, NewData, PipelineOutput, PosteriorFit, PredictionReport, ScreeningReport};
use robpcr::rj::ChainTrace;
use serde::Serialize;

use crate::config::RunConfig;
use crate::ingest::{self, Prediction, Training};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub response: String,
    pub covariates: Vec<String>,
    pub n_train: usize,
    pub n_predict: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PcaSummary {
    pub eigenvalues: Vec<f64>,
    pub explained: Vec<f64>,
    pub q: usize,
    pub excluded: Vec<usize>,
    pub column_stats: Vec<ColumnStats>,
    /// Retained eigenvectors, one inner vector per component.
    pub eigenvectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuningSummary {
    pub model: Vec<usize>,
    pub ell_start: f64,
    pub ell_opt: f64,
    pub regrids: usize,
    pub m_sigma: f64,
    pub s_sigma: f64,
    pub m_beta: Vec<f64>,
    pub s_beta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairOutliers {
    pub regressor: String,
    pub response: String,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelOutliers {
    pub model: Vec<usize>,
    pub rows: Vec<usize>,
}

/// Flagged observations; rows are numbered from 1 as in the input file.
#[derive(Debug, Clone, Serialize)]
pub struct Outliers {
    pub threshold: f64,
    pub covariate_pairs: Vec<PairOutliers>,
    pub regressions: Vec<ModelOutliers>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathReport {
    pub pca: PcaSummary,
    pub response_scale: ColumnStats,
    pub screening: ScreeningReport,
    pub models: Vec<Vec<usize>>,
    pub posterior: PosteriorFit,
    pub tuning: Vec<TuningSummary>,
    pub predictions: Option<PredictionReport>,
    pub outliers: Outliers,
}

/// Robust vs normal comparison when both paths ran.
#[derive(Debug, Clone, Serialize)]
pub struct Agreement {
    /// Total variation between the model probability vectors, with models
    /// matched by index set.
    pub total_variation: f64,
    /// Mean absolute difference of the two sets of predictions.
    pub prediction_aad: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub data: DataSummary,
    pub robust: Option<PathReport>,
    pub normal: Option<PathReport>,
    pub agreement: Option<Agreement>,
}

fn one_based(rows: &[usize]) -> Vec<usize> {
    rows.iter().map(|r| r + 1).collect()
}

fn pca_summary(res: &pca::PcaResult) -> PcaSummary {
    PcaSummary {
        eigenvalues: res.eigenvalues.clone(),
        explained: res.explained(),
        q: res.q,
        excluded: res.excluded.clone(),
        column_stats: res.column_stats.clone(),
        eigenvectors: (0..res.q).map(|j| res.eigenvectors.column(j).iter().copied().collect()).collect(),
    }
}

fn outliers(out: &PipelineOutput, names: &[String], threshold: f64) -> Outliers {
    let pair = |f: &PairFlags| PairOutliers {
        regressor: names[f.regressor].clone(),
        response: names[f.response].clone(),
        rows: one_based(&f.flagged),
    };
    Outliers {
        threshold,
        covariate_pairs: out.prepared.pair_flags.iter().filter(|f| !f.flagged.is_empty()).map(pair).collect(),
        regressions: out
            .residuals
            .iter()
            .map(|m| ModelOutliers {
                model: m.model.clone(),
                rows: one_based(&m.residuals.flagged()),
            })
            .collect(),
    }
}

pub fn path_report(out: &PipelineOutput, training: &Training, cfg: &RunConfig) -> PathReport {
    PathReport {
        pca: pca_summary(&out.prepared.pca),
        response_scale: out.prepared.y_stats,
        screening: out.screening.clone(),
        models: out.space.models().iter().map(|m| m.columns().to_vec()).collect(),
        posterior: out.posterior.clone(),
        tuning: out
            .tuning
            .iter()
            .map(|t| TuningSummary {
                model: t.columns.clone(),
                ell_start: t.start.ell,
                ell_opt: t.ell_opt,
                regrids: t.regrids,
                m_sigma: t.m_sigma,
                s_sigma: t.s_sigma,
                m_beta: t.m_beta.clone(),
                s_beta: t.s_beta.clone(),
            })
            .collect(),
        predictions: out.prediction.clone(),
        outliers: outliers(out, &training.covariates, cfg.pipeline.outlier_threshold),
    }
}

/// Total variation between two posteriors over possibly different nested
/// spaces; a model missing from one side has probability 0 there.
pub fn total_variation(a: &PosteriorFit, b: &PosteriorFit) -> f64 {
    let mut probs: BTreeMap<&[usize], (f64, f64)> = BTreeMap::new();
    for (m, p) in a.models.iter().zip(&a.probs) {
        probs.entry(m).or_default().0 += p;
    }
    for (m, p) in b.models.iter().zip(&b.probs) {
        probs.entry(m).or_default().1 += p;
    }
    0.5 * probs.values().map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn agreement(robust: &PipelineOutput, normal: &PipelineOutput) -> Agreement {
    let prediction_aad = match (&robust.prediction, &normal.prediction) {
        (Some(a), Some(b)) => {
            let n = a.predictions.len() as f64;
            Some(a.predictions.iter().zip(&b.predictions).map(|(x, y)| (x.averaged - y.averaged).abs()).sum::<f64>() / n)
        }
        _ => None,
    };
    Agreement {
        total_variation: total_variation(&robust.posterior, &normal.posterior),
        prediction_aad,
    }
}

/// All in-memory results of a run, before anything is written.
pub struct RunResults {
    pub report: RunReport,
    pub outputs: Vec<PipelineOutput>,
    pub training: Training,
    pub prediction: Option<Prediction>,
}

pub fn run(cfg: &RunConfig) -> Result<RunResults, CliError> {
    cfg.validate()?;
    let training = ingest::read_training(cfg.train.as_deref().expect("validated"))?;
    let prediction = match &cfg.predict {
        Some(p) => Some(ingest::read_prediction(p, &training.covariates)?),
        None => None,
    };
    let mut outputs = Vec::new();
    for path in cfg.mode.paths() {
        log::info!("running the {path:?} analysis");
        let new = prediction.as_ref().map(|p| NewData {
            covariates: &p.c,
            truth: p.truth.as_deref(),
        });
        outputs.push(pipeline::run(&training.c, &training.y, new, path, &cfg.pipeline)?);
    }
    let find = |p: Path| outputs.iter().find(|o| o.prepared.path == p);
    let report = RunReport {
        config: cfg.clone(),
        data: DataSummary {
            response: training.response.clone(),
            covariates: training.covariates.clone(),
            n_train: training.y.len(),
            n_predict: prediction.as_ref().map(|p| p.c.nrows()),
        },
        robust: find(Path::Robust).map(|o| path_report(o, &training, cfg)),
        normal: find(Path::Normal).map(|o| path_report(o, &training, cfg)),
        agreement: match (find(Path::Robust), find(Path::Normal)) {
            (Some(r), Some(n)) => Some(agreement(r, n)),
            _ => None,
        },
    };
    Ok(RunResults {
        report,
        outputs,
        training,
        prediction,
    })
}

fn path_name(p: Path) -> &'static str {
    match p {
        Path::Robust => "robust",
        Path::Normal => "normal",
    }
}

fn csv_writer(path: &FsPath) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(e.into()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.into())
}

fn write_trace(dir: &FsPath, name: &str, trace: &ChainTrace, models: &[Vec<usize>]) -> Result<(), CliError> {
    let mut w = csv_writer(&dir.join(format!("trace-{name}.csv")))?;
    let mut header = vec!["t".to_string(), "model".into(), "sigma".into()];
    header.extend((1..=trace.max_dim).map(|j| format!("beta_{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for t in 0..trace.len() {
        let mut rec = vec![t.to_string(), (trace.k[t] + 1).to_string(), trace.sigma[t].to_string()];
        rec.extend(trace.beta_row(t).iter().map(|b| if b.is_nan() { String::new() } else { b.to_string() }));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        seed: u64,
        burn_in: usize,
        iterations: usize,
        /// Design columns of each model; `model` in the CSV is 1-based.
        models: &'a [Vec<usize>],
        acceptance: &'a [robpcr::rj::Acceptance],
        initial: &'a robpcr::rj::ParameterState,
    }
    let side = Sidecar {
        seed: trace.seed,
        burn_in: trace.burn_in,
        iterations: trace.len(),
        models,
        acceptance: &trace.acceptance,
        initial: &trace.initial,
    };
    fs::write(dir.join(format!("trace-{name}.json")), serde_json::to_string_pretty(&side).expect("serializable"))?;
    Ok(())
}

/// Tidy `(x, y, series)` plot data.
fn write_tidy(path: &FsPath, points: impl IntoIterator<Item = (f64, f64, String)>) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "y", "series"]).map_err(csv_err)?;
    for (x, y, s) in points {
        w.write_record([x.to_string(), y.to_string(), s]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plots(dir: &FsPath, out: &PipelineOutput, training: &Training) -> Result<(), CliError> {
    let name = path_name(out.prepared.path);
    let scores = out.prepared.pca.retained_scores();
    let (scores, y) = (&scores, &training.y);
    write_tidy(
        &dir.join(format!("pc-scatter-{name}.csv")),
        (0..scores.ncols()).flat_map(|j| (0..scores.nrows()).map(move |i| (scores[(i, j)], y[i], format!("pc{}", j + 1)))),
    )?;
    let rec = pca::reconstruct(&out.prepared.pca, out.prepared.pca.q).map_err(|e| CliError::Numerical(e.to_string()))?;
    let rec = pca::destandardize(&rec, &out.prepared.pca.column_stats);
    let (c, rec) = (&training.c, &rec);
    write_tidy(
        &dir.join(format!("reconstruction-{name}.csv")),
        (0..c.ncols()).flat_map(|j| (0..c.nrows()).map(move |i| (c[(i, j)], rec[(i, j)], training.covariates[j].clone()))),
    )?;
    write_tidy(
        &dir.join(format!("screening-{name}.csv")),
        out.screening.entries.iter().map(|e| (e.component as f64, e.bayes_factor.log10(), "log10_bayes_factor".to_string())),
    )?;
    let mut tuning = Vec::new();
    for t in &out.tuning {
        let label = format!("{:?}", t.columns);
        for (ell, acc) in t.acceptance_curve() {
            tuning.push((ell, acc, format!("acceptance {label}")));
        }
        for (ell, iat) in t.iat_curve() {
            tuning.push((ell, iat, format!("iat {label}")));
        }
    }
    write_tidy(&dir.join(format!("tuning-{name}.csv")), tuning)?;
    Ok(())
}

fn write_predictions(path: &FsPath, outputs: &[PipelineOutput]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["row", "path", "prediction", "y_true"]).map_err(csv_err)?;
    for out in outputs {
        let Some(pred) = &out.prediction else { continue };
        for (i, p) in pred.predictions.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                path_name(out.prepared.path).to_string(),
                p.averaged.to_string(),
                p.truth.map_or(String::new(), |t| t.to_string()),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs and writes `report.json`, `predictions.csv` (with new data),
/// `trace-*.csv`/`.json` and `plots/*.csv` into the output directory.
pub fn run_and_write(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let res = run(cfg)?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir.join("plots"))?;
    let mut f = fs::File::create(dir.join("report.json"))?;
    f.write_all(serde_json::to_string_pretty(&res.report).expect("serializable").as_bytes())?;
    f.write_all(b"\n")?;
    if res.prediction.is_some() {
        write_predictions(&dir.join("predictions.csv"), &res.outputs)?;
    }
    for out in &res.outputs {
        if let Some(trace) = &out.trace {
            write_trace(dir, path_name(out.prepared.path), trace, &out.posterior.models)?;
        }
        write_plots(&dir.join("plots"), out, &res.training)?;
    }
    Ok(res.report)
}
