//! Seeded synthetic data generators used by the demos and test suites.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::Dataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix<R: Rng>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

/// Centers `v` and scales it to `Σ v² = n - 1`.
pub fn standardize_vector(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len() as f64;
    let centered = v.add_scalar(-v.mean());
    let scale = (centered.norm_squared() / (n - 1.0)).sqrt();
    centered / scale
}

/// Centered, mutually orthogonal columns scaled to `Σ x² = n - 1` that span
/// the same space as the centered `scores`.
pub fn orthogonal_scores(scores: &DMatrix<f64>) -> DMatrix<f64> {
    let n = scores.nrows();
    let mut centered = scores.clone();
    for mut col in centered.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let q = centered.clone().qr().q();
    let mut z = q.columns(0, scores.ncols()).into_owned() * ((n - 1) as f64).sqrt();
    // keep each column positively aligned with the raw score it came from
    for j in 0..z.ncols() {
        if z.column(j).dot(&centered.column(j)) < 0.0 {
            z.column_mut(j).neg_mut();
        }
    }
    z
}

/// Standardized response with an orthogonalized design built from `scores`.
pub fn orthogonalize(y: &DVector<f64>, scores: &DMatrix<f64>) -> Dataset {
    Dataset::from_scores(standardize_vector(y), &orthogonal_scores(scores))
        .expect("consistent dimensions")
}

/// Standardized orthogonal dataset with `d - 1` non-intercept columns and a
/// response that loads on the first two of them plus unit noise.
pub fn orthogonal_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut coefs = vec![0.0; d - 1];
    for (j, c) in coefs.iter_mut().take(2).enumerate() {
        *c = 0.8 / (j + 1) as f64;
    }
    orthogonal_dataset_with(n, &coefs, 1.0, seed)
}

/// Standardized orthogonal dataset where the response is generated as
/// `Σ coefs_j z_j + noise_sd · ε` before standardization.
pub fn orthogonal_dataset_with(n: usize, coefs: &[f64], noise_sd: f64, seed: u64) -> Dataset {
    let mut rng = rng(seed);
    let z = normal_matrix(n, coefs.len(), &mut rng);
    let x = orthogonal_scores(&z);
    let noise: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
    let y = &x * DVector::from_column_slice(coefs) + noise * noise_sd;
    Dataset::from_scores(standardize_vector(&y), &x).expect("consistent dimensions")
}

/// Two-covariate toy sample: `c1 = i - 11` for `i = 1..=21` and
/// `c2 = c1 + ε` with standard normal `ε`. When `outlier` is given, the
/// 21st point is moved to `(10, outlier)`.
pub fn toy_covariates(seed: u64, outlier: Option<f64>) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let mut c = DMatrix::from_fn(21, 2, |i, j| if j == 0 { i as f64 - 10.0 } else { 0.0 });
    for i in 0..21 {
        let eps: f64 = rng.sample(StandardNormal);
        c[(i, 1)] = c[(i, 0)] + eps;
    }
    if let Some(v) = outlier {
        c[(20, 1)] = v;
    }
    c
}
