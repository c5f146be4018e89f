//! Traditional and approximate robust principal component analysis.
//!
//! The traditional path standardizes each covariate by its sample mean and
//! standard deviation and decomposes the sample correlation matrix. The robust
//! path standardizes with LPTN location-scale MAP estimates and builds the
//! correlation matrix from pairwise LPTN regression slopes; the resulting
//! matrix need not be positive semidefinite, so nonpositive eigenvalues are
//! dropped before the number of components is chosen.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lptn::LptnParams;
use crate::robust::{self, DEFAULT_OUTLIER_THRESHOLD};

/// Eigenvalues at or below this value are treated as nonpositive.
pub const EIGEN_FLOOR: f64 = 1e-10;

pub const DEFAULT_VARIANCE_CAP: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Path {
    Normal,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Standardization {
    Sample,
    Robust(LptnParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub location: f64,
    pub scale: f64,
}

/// Standardizes every column of `c_raw`, returning the standardized matrix and
/// the location/scale used for each column.
pub fn standardize(c_raw: &DMatrix<f64>, mode: Standardization) -> Result<(DMatrix<f64>, Vec<ColumnStats>)> {
    let n = c_raw.nrows();
    if n < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 rows, got {n}")));
    }
    let stats: Vec<ColumnStats> = (0..c_raw.ncols())
        .into_par_iter()
        .map(|j| column_stats(c_raw.column(j).as_slice(), j, mode))
        .collect::<Result<_>>()?;
    Ok((apply_stats(c_raw, &stats)?, stats))
}

fn column_stats(col: &[f64], j: usize, mode: Standardization) -> Result<ColumnStats> {
    if col.iter().all(|&v| v == col[0]) {
        return Err(Error::DegenerateScale { column: j });
    }
    match mode {
        Standardization::Sample => {
            let (location, scale) = mean_sd(col);
            Ok(ColumnStats { location, scale })
        }
        Standardization::Robust(p) => {
            let fit = robust::map_location_scale(col, &p).map_err(|e| match e {
                Error::DegenerateScale { .. } => Error::DegenerateScale { column: j },
                other => other,
            })?;
            Ok(ColumnStats {
                location: fit.beta[0],
                scale: fit.sigma,
            })
        }
    }
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `(c - location) / scale` columnwise, e.g. to bring new observations onto
/// the training scale.
pub fn apply_stats(c_raw: &DMatrix<f64>, stats: &[ColumnStats]) -> Result<DMatrix<f64>> {
    if c_raw.ncols() != stats.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns but {} column statistics",
            c_raw.ncols(),
            stats.len()
        )));
    }
    Ok(DMatrix::from_fn(c_raw.nrows(), c_raw.ncols(), |i, j| {
        (c_raw[(i, j)] - stats[j].location) / stats[j].scale
    }))
}

/// Inverse of [`apply_stats`].
pub fn destandardize(c: &DMatrix<f64>, stats: &[ColumnStats]) -> DMatrix<f64> {
    DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
        c[(i, j)] * stats[j].scale + stats[j].location
    })
}

pub fn sample_correlation(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows() as f64;
    let mut r = c.tr_mul(c) / (n - 1.0);
    // exact symmetry
    for i in 0..r.nrows() {
        for j in 0..i {
            r[(i, j)] = r[(j, i)];
        }
    }
    r
}

/// Residual outlier flags from one pairwise regression of column `response`
/// on column `regressor`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairFlags {
    pub regressor: usize,
    pub response: usize,
    pub flagged: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RobustCorrelation {
    pub r: DMatrix<f64>,
    /// Raw slopes before clipping, upper triangle only.
    pub raw_slopes: Vec<(usize, usize, f64)>,
    pub pair_flags: Vec<PairFlags>,
}

#[derive(Debug, Clone, Copy)]
pub struct RobustCorrelationOptions {
    pub clip: bool,
    pub outlier_threshold: f64,
}

impl Default for RobustCorrelationOptions {
    fn default() -> Self {
        Self {
            clip: true,
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
        }
    }
}

/// Correlation matrix whose entry (j1, j2), j1 < j2, is the LPTN MAP slope of
/// column j2 regressed on column j1 (with intercept); mirrored below the
/// diagonal.
pub fn robust_correlation(
    c: &DMatrix<f64>,
    p: &LptnParams,
    opts: RobustCorrelationOptions,
) -> Result<RobustCorrelation> {
    let (n, m) = c.shape();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect();
    let fits: Vec<(f64, Vec<usize>)> = pairs
        .par_iter()
        .map(|&(j1, j2)| {
            let x = DMatrix::from_fn(n, 2, |i, k| if k == 0 { 1.0 } else { c[(i, j1)] });
            let y = c.column(j2).into_owned();
            let tag = |e: Error| Error::PairFit {
                regressor: j1,
                response: j2,
                source: Box::new(e),
            };
            match robust::map_regression(&x, &y, p) {
                Ok(fit) => {
                    let report = robust::standardized_residuals(&fit, &x, &y, opts.outlier_threshold)
                        .map_err(tag)?;
                    Ok((fit.beta[1], report.flagged()))
                }
                // exact linear relation: the slope is determined without noise
                Err(Error::ExactFit { .. }) => {
                    let beta = robust::least_squares(&x, &y).map_err(tag)?;
                    Ok((beta[1], Vec::new()))
                }
                Err(e) => Err(tag(e)),
            }
        })
        .collect::<Result<_>>()?;

    let mut r = DMatrix::identity(m, m);
    let mut raw_slopes = Vec::with_capacity(pairs.len());
    let mut pair_flags = Vec::with_capacity(pairs.len());
    for (&(j1, j2), (slope, flagged)) in pairs.iter().zip(fits) {
        let v = if opts.clip { slope.clamp(-1.0, 1.0) } else { slope };
        r[(j1, j2)] = v;
        r[(j2, j1)] = v;
        raw_slopes.push((j1, j2, slope));
        pair_flags.push(PairFlags {
            regressor: j1,
            response: j2,
            flagged,
        });
    }
    Ok(RobustCorrelation {
        r,
        raw_slopes,
        pair_flags,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaResult {
    pub path: Path,
    /// All eigenvalues of the correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors in the same order, as columns.
    pub eigenvectors: DMatrix<f64>,
    /// Positions (in the sorted order) of eigenpairs dropped as nonpositive.
    pub excluded: Vec<usize>,
    /// Number of components retained by the variance cap.
    pub q: usize,
    pub cap: f64,
    pub column_stats: Vec<ColumnStats>,
    /// Scores of every positive-eigenvalue component (n × r).
    pub scores: DMatrix<f64>,
    /// Multiplier applied to `C v_j` to obtain score j.
    pub score_scale: Vec<f64>,
}

impl PcaResult {
    /// Number of components with a positive eigenvalue.
    pub fn rank(&self) -> usize {
        self.score_scale.len()
    }

    pub fn retained_scores(&self) -> DMatrix<f64> {
        self.scores.columns(0, self.q).into_owned()
    }

    /// Retained scores of new raw observations, computed with the training
    /// standardization and eigenvectors.
    pub fn transform(&self, c_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let c = apply_stats(c_raw, &self.column_stats)?;
        let mut z = c * self.eigenvectors.columns(0, self.q);
        for (j, mut col) in z.column_iter_mut().enumerate() {
            col *= self.score_scale[j];
        }
        Ok(z)
    }

    /// Fraction of the positive spectrum carried by each retained component.
    pub fn explained(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues[..self.rank()].iter().sum();
        self.eigenvalues[..self.q].iter().map(|l| l / total).collect()
    }
}

/// Eigendecomposition of `r`, variance-cap selection and PC scores of `c`.
pub fn decompose(
    r: &DMatrix<f64>,
    c: &DMatrix<f64>,
    column_stats: Vec<ColumnStats>,
    cap: f64,
    path: Path,
) -> Result<PcaResult> {
    let m = r.nrows();
    if r.ncols() != m || c.ncols() != m || column_stats.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "correlation {}×{}, data with {} columns, {} column statistics",
            m,
            r.ncols(),
            c.ncols(),
            column_stats.len()
        )));
    }
    if !(cap > 0.0 && cap <= 1.0) {
        return Err(Error::Domain {
            name: "cap",
            value: cap,
            range: "(0, 1]",
        });
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("correlation matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(r.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v.neg_mut();
        }
        eigenvectors.set_column(dst, &v);
    }

    let rank = eigenvalues.iter().filter(|&&l| l > EIGEN_FLOOR).count();
    let excluded: Vec<usize> = (rank..m).collect();
    if rank == 0 {
        return Err(Error::NoPositiveEigenvalues);
    }
    if !excluded.is_empty() {
        log::info!(
            "excluding {} nonpositive eigenvalue(s): {:?}",
            excluded.len(),
            &eigenvalues[rank..]
        );
    }
    let q = cap_rule(&eigenvalues[..rank], cap);

    let score_scale: Vec<f64> = eigenvalues[..rank]
        .iter()
        .map(|&l| match path {
            Path::Normal => 1.0 / l.sqrt(),
            Path::Robust => 1.0,
        })
        .collect();
    let mut scores = c * eigenvectors.columns(0, rank);
    for (j, mut col) in scores.column_iter_mut().enumerate() {
        col *= score_scale[j];
    }

    Ok(PcaResult {
        path,
        eigenvalues,
        eigenvectors,
        excluded,
        q,
        cap,
        column_stats,
        scores,
        score_scale,
    })
}

/// Largest q with cumulative share ≤ cap, at least 1.
pub fn cap_rule(positive_eigenvalues: &[f64], cap: f64) -> usize {
    let total: f64 = positive_eigenvalues.iter().sum();
    let mut cum = 0.0;
    let mut q = 0;
    for &l in positive_eigenvalues {
        cum += l;
        if cum / total <= cap {
            q += 1;
        } else {
            break;
        }
    }
    q.max(1)
}

/// Rank-q approximation `Σ_{j≤q} (C v_j) v_jᵀ` in standardized coordinates.
pub fn reconstruct(res: &PcaResult, q: usize) -> Result<DMatrix<f64>> {
    if q == 0 || q > res.rank() {
        return Err(Error::InvalidInput(format!(
            "reconstruction rank {q} outside 1..={}",
            res.rank()
        )));
    }
    let mut projections = res.scores.columns(0, q).into_owned();
    for (j, mut col) in projections.column_iter_mut().enumerate() {
        col /= res.score_scale[j];
    }
    Ok(projections * res.eigenvectors.columns(0, q).transpose())
}

/// Standardization, correlation and decomposition in one call.
pub fn fit(c_raw: &DMatrix<f64>, path: Path, p: &LptnParams, cap: f64) -> Result<(PcaResult, Vec<PairFlags>)> {
    fit_with(c_raw, path, p, cap, RobustCorrelationOptions::default())
}

pub fn fit_with(
    c_raw: &DMatrix<f64>,
    path: Path,
    p: &LptnParams,
    cap: f64,
    opts: RobustCorrelationOptions,
) -> Result<(PcaResult, Vec<PairFlags>)> {
    match path {
        Path::Normal => {
            let (c, stats) = standardize(c_raw, Standardization::Sample)?;
            let r = sample_correlation(&c);
            Ok((decompose(&r, &c, stats, cap, path)?, Vec::new()))
        }
        Path::Robust => {
            let (c, stats) = standardize(c_raw, Standardization::Robust(*p))?;
            let rc = robust_correlation(&c, p, opts)?;
            Ok((decompose(&rc.r, &c, stats, cap, path)?, rc.pair_flags))
        }
    }
}

/// Sum of squared reconstruction errors (original units) over `rows`.
pub fn squared_error(c_raw: &DMatrix<f64>, reconstruction: &DMatrix<f64>, rows: impl IntoIterator<Item = usize>) -> f64 {
    rows.into_iter()
        .map(|i| (c_raw.row(i) - reconstruction.row(i)).norm_squared())
        .sum()
}

/// Column-wise dot products between two score matrices divided by `n - 1`,
/// handy for comparing components up to sign.
pub fn score_agreement(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows() as f64;
    DVector::from_fn(a.ncols().min(b.ncols()), |j, _| {
        a.column(j).dot(&b.column(j)) / (n - 1.0)
    })
}
