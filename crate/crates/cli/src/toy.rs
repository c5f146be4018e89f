//! Rank-1 reconstruction of the 21-point toy sample by the robust and the
//! traditional PCA, with the last point optionally moved off the line.

use std::fs;
use std::path::Path as FsPath;

use nalgebra::DMatrix;
use robpcr::lptn::LptnParams;
use robpcr::pca::{self, Path};
use robpcr::synthetic::toy_covariates;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct ToySummary {
    pub seed: u64,
    /// Second coordinate of the moved 21st point, if any.
    pub outlier: Option<f64>,
    /// Squared reconstruction errors summed over the first 20 points.
    pub inlier_error_robust: f64,
    pub inlier_error_traditional: f64,
    /// Points flagged by the pairwise robust regressions (1-based).
    pub flagged_rows: Vec<usize>,
}

pub struct Toy {
    pub data: DMatrix<f64>,
    pub robust: DMatrix<f64>,
    pub traditional: DMatrix<f64>,
    pub summary: ToySummary,
}

fn rank1(c_raw: &DMatrix<f64>, path: Path) -> Result<(DMatrix<f64>, Vec<pca::PairFlags>), CliError> {
    let p = LptnParams::new(0.95).expect("valid rho");
    let numerical = |e: robpcr::error::Error| CliError::Numerical(e.to_string());
    let (res, flags) = pca::fit(c_raw, path, &p, pca::DEFAULT_VARIANCE_CAP).map_err(numerical)?;
    let rec = pca::reconstruct(&res, 1).map_err(numerical)?;
    Ok((pca::destandardize(&rec, &res.column_stats), flags))
}

pub fn toy(seed: u64, outlier: Option<f64>) -> Result<Toy, CliError> {
    let data = toy_covariates(seed, outlier);
    let (robust, flags) = rank1(&data, Path::Robust)?;
    let (traditional, _) = rank1(&data, Path::Normal)?;
    let mut flagged_rows: Vec<usize> = flags.iter().flat_map(|f| f.flagged.iter().map(|i| i + 1)).collect();
    flagged_rows.sort_unstable();
    flagged_rows.dedup();
    let summary = ToySummary {
        seed,
        outlier,
        inlier_error_robust: pca::squared_error(&data, &robust, 0..20),
        inlier_error_traditional: pca::squared_error(&data, &traditional, 0..20),
        flagged_rows,
    };
    Ok(Toy {
        data,
        robust,
        traditional,
        summary,
    })
}

/// Writes `toy-reconstruction.csv` (tidy `x, y, series`) and `toy-summary.json`.
pub fn run_and_write(seed: u64, outlier: Option<f64>, dir: &FsPath) -> Result<ToySummary, CliError> {
    let t = toy(seed, outlier)?;
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("toy-reconstruction.csv")).map_err(|e| CliError::Io(e.into()))?;
    w.write_record(["x", "y", "series"]).map_err(|e| CliError::Io(e.into()))?;
    for (m, series) in [(&t.data, "data"), (&t.robust, "robust"), (&t.traditional, "traditional")] {
        for i in 0..m.nrows() {
            w.write_record([m[(i, 0)].to_string(), m[(i, 1)].to_string(), series.to_string()])
                .map_err(|e| CliError::Io(e.into()))?;
        }
    }
    w.flush()?;
    fs::write(dir.join("toy-summary.json"), serde_json::to_string_pretty(&t.summary).expect("serializable"))?;
    println!(
        "inlier squared error: robust {:.3}, traditional {:.3}",
        t.summary.inlier_error_robust, t.summary.inlier_error_traditional
    );
    Ok(t.summary)
}
