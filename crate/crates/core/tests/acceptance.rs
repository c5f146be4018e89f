//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! they run sequentially inside a single test so the wall-clock limits are
//! not distorted by other criteria competing for the same cores.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use robpcr::lptn::LptnParams;
use robpcr::model::{Dataset, ModelSpace, ModelSpec};
use robpcr::normal_posterior::{bic_posterior_consistency, NormalPosteriorSummary};
use robpcr::pca::{self, Path};
use robpcr::pipeline::{self, NewData, PipelineConfig};
use robpcr::rj::{self, ErrorModel, Init, ParameterState, Target};
use robpcr::robust::{least_squares, map_regression};
use robpcr::synthetic::{normal_matrix, orthogonal_dataset, orthogonalize, rng, toy_covariates};
use robpcr::tuner::{self, TuningOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, started: Instant, limit_s: f64, o: Outcome) -> bool {
    let secs = started.elapsed().as_secs_f64();
    let pass = o.pass && secs < limit_s;
    println!(
        "{} criterion {id} ({name}): {}; {secs:.1} s (limit {limit_s} s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail
    );
    pass
}

// ---------------------------------------------------------------------------
// 1. closed-form model probabilities vs brute-force quadrature

/// `log ∫∫ σ⁻¹ ∏ N(y_i | x_iβ, σ²) dβ dσ` up to the `(2π)^(-n/2)` constant
/// shared by all models, by nested adaptive quadrature over `(log σ, β)`.
fn log_evidence_by_quadrature(data: &Dataset, model: &ModelSpec) -> f64 {
    let x = data.design(model);
    let y = &data.y;
    let n = data.n() as f64;
    let d = model.dim();
    let bhat = least_squares(&x, y).unwrap();
    let rss = (y - &x * &bhat).norm_squared();
    // joint maximum of the integrand, used as the reference level
    let s0 = 0.5 * (rss / n).ln();
    let reference = -n * s0 - 0.5 * n;
    let col_norm: Vec<f64> = (0..d).map(|j| x.column(j).norm()).collect();

    fn inner(j: usize, s: f64, partial: &DVector<f64>, x: &DMatrix<f64>, bhat: &DVector<f64>, col_norm: &[f64], shift: f64) -> f64 {
        let sigma = s.exp();
        if j == x.ncols() {
            return (shift - partial.norm_squared() / (2.0 * sigma * sigma)).exp();
        }
        let half = 12.0 * sigma / col_norm[j];
        let col = x.column(j).into_owned();
        quadrature::integrate(
            |b| inner(j + 1, s, &(partial - &col * b), x, bhat, col_norm, shift),
            bhat[j] - half,
            bhat[j] + half,
            1e-13,
        )
        .integral
    }

    let dof = n - d as f64;
    let out = quadrature::integrate(
        |s| inner(0, s, y, &x, &bhat, &col_norm, -n * s - reference),
        s0 - 4.0,
        s0 + 40.0 / dof,
        1e-13,
    );
    out.integral.ln() + reference
}

fn criterion_1() -> Outcome {
    let data = orthogonal_dataset(10, 3, 2024);
    let space = ModelSpace::nested(&[1, 2]).unwrap();
    let exact = NormalPosteriorSummary::fit(&space, &data, None).unwrap();
    let logs: Vec<f64> = space.models().iter().map(|m| log_evidence_by_quadrature(&data, m)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    let quad: Vec<f64> = logs.iter().map(|l| (l - max).exp() / total).collect();
    let rel = exact
        .model_probs
        .iter()
        .zip(&quad)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: rel < 1e-6,
        detail: format!("probs {:?} vs quadrature {:?}, max relative error {rel:.2e} (tol 1e-6)", exact.model_probs, quad),
    }
}

// ---------------------------------------------------------------------------
// 2. sampler occupancy and coefficient means under normal errors

fn criterion_2() -> Outcome {
    let data = orthogonal_dataset(15, 3, 11);
    let space = ModelSpace::nested(&[1, 2]).unwrap();
    let exact = NormalPosteriorSummary::fit(&space, &data, None).unwrap();
    let opts = TuningOptions {
        iterations: 20_000,
        burn_in: 2_000,
        probe_iterations: 5_000,
        ..Default::default()
    };
    let tuned: Vec<_> = space
        .models()
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let fit = pipeline::preliminary_fit(m, &data, ErrorModel::Normal).unwrap();
            tuner::tune_model(m, &data, ErrorModel::Normal, &fit, &opts, 100 + k as u64).unwrap()
        })
        .collect();
    let inputs = tuner::assemble_inputs(&tuned, 0.6, opts.kernel_rho).unwrap();
    let target = Target::new(&space, &data, ErrorModel::Normal, None).unwrap();
    let starts = tuned.iter().map(|t| t.start_distribution()).collect();
    let trace = rj::run_chain(&target, &inputs, Init::Draw(starts), 200_000, 20_000, 7).unwrap();
    let est = rj::estimate(&trace);
    let prob_err = est
        .probs
        .iter()
        .zip(&exact.model_probs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut worst_z: f64 = 0.0;
    for k in 0..space.len() {
        let (Some(mean), Some(mcse)) = (&est.beta_mean[k], &est.beta_mcse[k]) else {
            continue;
        };
        for j in 0..mean.len() {
            worst_z = worst_z.max((mean[j] - exact.beta_hat[k][j]).abs() / mcse[j]);
        }
    }
    Outcome {
        pass: prob_err <= 0.02 && worst_z <= 3.0,
        detail: format!(
            "occupancy {:?} vs {:?}, max abs error {prob_err:.4} (tol 0.02); worst coefficient |error|/MCSE {worst_z:.2} (tol 3)",
            est.probs, exact.model_probs
        ),
    }
}

// ---------------------------------------------------------------------------
// 3. birth/death detailed balance

fn criterion_3() -> Outcome {
    let data = orthogonal_dataset(12, 4, 7);
    let space = ModelSpace::nested(&[1, 2, 3]).unwrap();
    let target = Target::new(&space, &data, ErrorModel::Lptn { rho: 0.95 }, Some(vec![0.0, -0.5, 0.3, 0.1])).unwrap();
    let kernel = LptnParams::new(0.95).unwrap();
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let shift = r.gen_range(-0.3..0.3);
        let inputs = rj::SamplerInputs {
            vartheta: r.gen_range(0.2..0.9),
            ell: vec![0.1; 4],
            shifts: (0..4)
                .map(|k: usize| if k == 0 { Vec::new() } else { (0..=k).map(|j| if j == 0 { 0.0 } else { shift * j as f64 }).collect() })
                .collect(),
            birth: (0..4)
                .map(|k| (k > 0).then(|| rj::BirthProposal { location: r.gen_range(-0.5..0.5), scale: r.gen_range(0.1..1.0) }))
                .collect(),
            kernel_rho: 0.95,
        };
        let k = r.gen_range(0..3usize);
        let x = ParameterState {
            k,
            sigma: r.gen_range(0.3..2.0),
            beta: (0..=k).map(|_| r.gen_range(-1.0..1.0)).collect(),
        };
        let u = r.gen_range(-1.5..1.5);
        let xp = rj::birth_state(&inputs, &x, u);
        let g_birth = 0.5 * (1.0 - inputs.vartheta);
        let q = inputs.birth[k + 1].unwrap().ln_density(&kernel, u);
        let cap = |v: f64| v.min(0.0);
        let lhs = cap(rj::log_accept_birth(&target, &inputs, &kernel, &x, u)) + target.log_posterior(&x) + g_birth.ln() + q;
        let rhs = cap(rj::log_accept_death(&target, &inputs, &kernel, &xp)) + target.log_posterior(&xp) + g_birth.ln();
        worst = worst.max((lhs - rhs).abs());
    }
    Outcome {
        pass: worst < 1e-10,
        detail: format!("max |forward - reverse flow| over 100 configurations {worst:.2e} (tol 1e-10)"),
    }
}

// ---------------------------------------------------------------------------
// 4. LPTN density, quantile and sampler

fn criterion_4() -> Outcome {
    let p = LptnParams::new(0.95).unwrap();
    let f = |x: f64| p.ln_pdf(x).exp();
    // numerical mass on [0, A], analytic log-Pareto tail beyond A
    let a: f64 = 1e3;
    let core = quadrature::integrate(f, 0.0, p.tau, 1e-14).integral;
    let near = quadrature::integrate(f, p.tau, 50.0, 1e-14).integral;
    let far = quadrature::integrate(|l: f64| f(l.exp()) * l.exp(), 50f64.ln(), a.ln(), 1e-14).integral;
    let phi_tau = (-0.5 * p.tau * p.tau).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = phi_tau * p.tau * p.tau.ln().powf(p.lambda + 1.0) / (p.lambda * a.ln().powf(p.lambda));
    let mass = 2.0 * (core + near + far + tail);
    let mass_err = (mass - 1.0).abs();

    let mut inv_err: f64 = 0.0;
    for i in 0..1000 {
        let x = -15.0 + 30.0 * (i as f64 + 0.5) / 1000.0;
        let back = p.quantile(p.cdf(x)).unwrap();
        inv_err = inv_err.max((back - x).abs() / x.abs().max(1.0));
    }

    let mut s = p.sample(100_000, 4);
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let ks = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = p.cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    Outcome {
        pass: mass_err < 1e-6 && inv_err < 1e-10 && ks < 0.01,
        detail: format!(
            "|∫f - 1| = {mass_err:.2e} (tol 1e-6); max quantile(cdf(x)) error {inv_err:.2e} (tol 1e-10); KS distance {ks:.4} at n = 1e5 (tol 0.01)"
        ),
    }
}

// ---------------------------------------------------------------------------
// 5. toy rank-1 reconstruction

fn criterion_5() -> Outcome {
    let p = LptnParams::new(0.95).unwrap();
    let rank1_error = |c: &DMatrix<f64>, path| {
        let (res, _) = pca::fit(c, path, &p, pca::DEFAULT_VARIANCE_CAP).unwrap();
        let rec = pca::destandardize(&pca::reconstruct(&res, 1).unwrap(), &res.column_stats);
        pca::squared_error(c, &rec, 0..20)
    };
    let mut ratios = Vec::new();
    let mut all_below = true;
    for seed in 1..=20 {
        let c = toy_covariates(seed, Some(20.0));
        let (r, t) = (rank1_error(&c, Path::Robust), rank1_error(&c, Path::Normal));
        all_below &= r < t;
        ratios.push(r / t);
    }
    ratios.sort_by(f64::total_cmp);
    let median = 0.5 * (ratios[9] + ratios[10]);
    Outcome {
        pass: all_below && median < 0.7,
        detail: format!("robust below traditional in every seed: {all_below}; median ratio {median:.3} (tol 0.7)"),
    }
}

// ---------------------------------------------------------------------------
// 6. whole-robustness plateau

fn criterion_6() -> Outcome {
    let n = 100;
    let mut r = rng(31);
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - (n / 2) as f64 });
    let y = DVector::from_fn(n, |i, _| x[(i, 1)] + r.sample::<f64, _>(StandardNormal));
    let p = LptnParams::new(0.95).unwrap();
    let with_offset = |off: f64| {
        let mut yy = y.clone();
        yy[n - 1] += off;
        (map_regression(&x, &yy, &p).unwrap().beta, least_squares(&x, &yy).unwrap())
    };
    let (r20, _) = with_offset(20.0);
    let (r50, o50) = with_offset(50.0);
    let (r100, o100) = with_offset(100.0);
    let inliers = map_regression(&x.rows(0, n - 1).into_owned(), &y.rows(0, n - 1).into_owned(), &p).unwrap().beta;
    let plateau = (&r50 - &r100).amax();
    let to_inliers = (&r50 - &inliers).amax().max((&r100 - &inliers).amax());
    let ols = (&o50 - &o100).amax();
    Outcome {
        pass: plateau < 1e-3 && to_inliers < 0.05 && ols > 0.1,
        detail: format!(
            "MAP change 50→100 {plateau:.2e} (tol 1e-3); distance to inlier-only fit {to_inliers:.4} (tol 0.05); OLS change {ols:.3} (> 0.1); offset 20 distance {:.4}",
            (&r20 - &inliers).amax()
        ),
    }
}

// ---------------------------------------------------------------------------
// 7. integrated autocorrelation time

fn criterion_7() -> Outcome {
    let mut r = rng(7);
    let mut v = 0.0;
    let ar: Vec<f64> = (0..100_000)
        .map(|_| {
            v = 0.9 * v + r.sample::<f64, _>(StandardNormal);
            v
        })
        .collect();
    let white: Vec<f64> = (0..100_000).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let (a, w) = (tuner::iat(&ar).unwrap(), tuner::iat(&white).unwrap());
    Outcome {
        pass: (a - 19.0).abs() <= 0.15 * 19.0 && (0.9..=1.2).contains(&w),
        detail: format!("AR(1) 0.9 IAT {a:.2} (19 ± 15%); white noise IAT {w:.3} ([0.9, 1.2])"),
    }
}

// ---------------------------------------------------------------------------
// 8. posterior odds vs BIC

fn criterion_8() -> Outcome {
    let s = ModelSpec::new(vec![0, 1]).unwrap();
    let t = ModelSpec::new(vec![0, 1, 2]).unwrap();
    // one growing sample from y = 0.5 z1 + 0.3 z2 + ε, analysed at each prefix
    let mut r = rng(8);
    let z = normal_matrix(800, 2, &mut r);
    let y = DVector::from_fn(800, |i, _| 0.5 * z[(i, 0)] + 0.3 * z[(i, 1)] + r.sample::<f64, _>(StandardNormal));
    let diags: Vec<_> = [50, 200, 800]
        .iter()
        .map(|&n| {
            let data = orthogonalize(&y.rows(0, n).into_owned(), &z.rows(0, n).into_owned());
            bic_posterior_consistency(&s, &t, &data).unwrap()
        })
        .collect();
    let bounded = diags.iter().all(|d| d.difference.abs() < 5.0);
    let grows = diags.windows(2).all(|w| {
        w[1].log_posterior_odds.abs() > w[0].log_posterior_odds.abs() && w[1].neg_half_bic_diff.abs() > w[0].neg_half_bic_diff.abs()
    });
    let fmt: Vec<String> = diags
        .iter()
        .map(|d| format!("({:.2}, {:.2}, {:.3})", d.log_posterior_odds, d.neg_half_bic_diff, d.difference))
        .collect();
    Outcome {
        pass: bounded && grows,
        detail: format!("(log odds, -ΔBIC/2, difference) at n = 50, 200, 800: {}; bounded by 5: {bounded}; terms grow: {grows}", fmt.join(" ")),
    }
}

// ---------------------------------------------------------------------------
// 9. end-to-end on synthetic data with two informative components

const INFORMATIVE: [(usize, f64); 2] = [(0, 0.5), (2, 0.4)];

/// Six correlated covariates with a fixed population correlation structure;
/// the response loads on the first and third population components.
struct Generator {
    chol: DMatrix<f64>,
    sd: Vec<f64>,
    /// Population eigenvectors of the correlation matrix scaled by `1/√λ`,
    /// in decreasing eigenvalue order.
    loadings: Vec<DVector<f64>>,
}

impl Generator {
    fn new() -> Self {
        let mut r = rng(12345);
        let g = DMatrix::from_fn(6, 6, |_, _| r.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let lam = DVector::from_vec(vec![2.0, 1.4, 1.0, 0.7, 0.5, 0.4]);
        let cov = &q * DMatrix::from_diagonal(&lam) * q.transpose();
        let sd: Vec<f64> = (0..6).map(|i| cov[(i, i)].sqrt()).collect();
        let corr = DMatrix::from_fn(6, 6, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
        let eig = SymmetricEigen::new(corr);
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let loadings = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i) / eig.eigenvalues[i].sqrt())
            .collect();
        Self {
            chol: cov.cholesky().unwrap().l(),
            sd,
            loadings,
        }
    }

    fn draw(&self, n: usize, r: &mut ChaCha8Rng) -> (DMatrix<f64>, DVector<f64>) {
        let z = DMatrix::from_fn(n, 6, |_, _| r.sample::<f64, _>(StandardNormal));
        let c = z * self.chol.transpose();
        let y = DVector::from_fn(n, |i, _| {
            let std_row = DVector::from_fn(6, |j, _| c[(i, j)] / self.sd[j]);
            let signal: f64 = INFORMATIVE.iter().map(|&(pc, coef)| coef * std_row.dot(&self.loadings[pc])).sum();
            signal + r.sample::<f64, _>(StandardNormal)
        });
        (c, y)
    }
}

fn criterion_9() -> Outcome {
    let gen = Generator::new();
    let cfg = PipelineConfig {
        tuning: TuningOptions {
            iterations: 10_000,
            burn_in: 1_000,
            probe_iterations: 2_000,
            ..Default::default()
        },
        iterations: 50_000,
        burn_in: 5_000,
        ..Default::default()
    };
    let expected: Vec<usize> = INFORMATIVE.iter().map(|&(pc, _)| pc + 1).collect();
    let (mut exact, mut aad_robust, mut aad_normal, mut errors) = (0, 0.0, 0.0, 0);
    for seed in 1..=20u64 {
        let mut r = rng(seed);
        let (c, mut y) = gen.draw(1500, &mut r);
        y[0] += 50.0;
        y[1] += 50.0;
        let (c_test, y_test) = gen.draw(500, &mut r);
        let cfg = PipelineConfig { seed, ..cfg };
        let mut aads = [f64::NAN; 2];
        for (slot, path) in [Path::Robust, Path::Normal].into_iter().enumerate() {
            let new = NewData { covariates: &c_test, truth: Some(y_test.as_slice()) };
            match pipeline::run(&c, &y, Some(new), path, &cfg) {
                Ok(out) => {
                    if path == Path::Robust && out.screening.retained() == expected {
                        exact += 1;
                    }
                    if path == Path::Robust {
                        println!("  seed {seed}: robust retained {:?}", out.screening.retained());
                    }
                    aads[slot] = out.prediction.and_then(|p| p.aad).unwrap_or(f64::NAN);
                }
                Err(e) => {
                    println!("  seed {seed}: {path:?} failed: {e}");
                    errors += 1;
                }
            }
        }
        aad_robust += aads[0] / 20.0;
        aad_normal += aads[1] / 20.0;
    }
    Outcome {
        pass: errors == 0 && exact >= 18 && aad_robust < aad_normal,
        detail: format!(
            "robust retains exactly {expected:?} in {exact}/20 seeds (need 18); mean test AAD robust {aad_robust:.4} vs normal {aad_normal:.4}; failed runs {errors}"
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, f64, fn() -> Outcome); 9] = [
        ("closed form vs quadrature", 10.0, criterion_1),
        ("sampler under normal errors", 60.0, criterion_2),
        ("birth/death reversibility", 1.0, criterion_3),
        ("LPTN validity", 60.0, criterion_4),
        ("robust PCA toy", 60.0, criterion_5),
        ("whole-robustness plateau", 30.0, criterion_6),
        ("IAT estimator", 60.0, criterion_7),
        ("finite-n BIC diagnostic", 30.0, criterion_8),
        ("end-to-end synthetic", 600.0, criterion_9),
    ];
    // ACCEPTANCE_ONLY=1,4 restricts the run to the listed criteria
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let t0 = Instant::now();
        if !report(i + 1, name, t0, limit, f()) {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
