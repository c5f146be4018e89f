//! The log-Pareto-tailed standard normal (LPTN) distribution.
//!
//! The density equals the standard normal density on `[-tau, tau]` and decays
//! like `(1/|x|) (log |x|)^(-lambda-1)` outside of it. `rho` is the probability
//! mass of the normal core; `tau` and `lambda` are derived from it so that the
//! density is continuous and integrates to one.
//!
//! Everything is evaluated on the log scale since the tails underflow long
//! before they become negligible.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_ln_pdf, norm_pdf, norm_quantile};

/// Lower bound of the admissible `rho` range, `2 Φ(1) - 1`.
pub fn min_rho() -> f64 {
    2.0 * norm_cdf(1.0) - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LptnParams {
    pub rho: f64,
    pub tau: f64,
    pub lambda: f64,
    ln_tau: f64,
    ln_ln_tau: f64,
    ln_pdf_tau: f64,
}

impl LptnParams {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > min_rho() && rho < 1.0) {
            return Err(Error::Domain {
                name: "rho",
                value: rho,
                range: "(2Φ(1) - 1, 1) ≈ (0.6827, 1)",
            });
        }
        let tau = norm_quantile(0.5 * (1.0 + rho));
        let ln_tau = tau.ln();
        let lambda = 2.0 / (1.0 - rho) * norm_pdf(tau) * tau * ln_tau;
        Ok(Self {
            rho,
            tau,
            lambda,
            ln_tau,
            ln_ln_tau: ln_tau.ln(),
            ln_pdf_tau: norm_ln_pdf(tau),
        })
    }

    /// Mass in each of the two tails, `(1 - rho) / 2`.
    fn tail_mass(&self) -> f64 {
        0.5 * (1.0 - self.rho)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax <= self.tau {
            norm_ln_pdf(x)
        } else {
            self.ln_pdf_tau + self.ln_tau - ax.ln()
                + (self.lambda + 1.0) * (self.ln_ln_tau - ax.ln().ln())
        }
    }

    /// Derivative of `ln_pdf`. At `|x| = tau` the core (left-sided for
    /// positive x) derivative is returned.
    pub fn d_ln_pdf(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax <= self.tau {
            -x
        } else {
            -(1.0 + (self.lambda + 1.0) / ax.ln()) / x
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < -self.tau {
            self.tail_mass() * (self.ln_tau / (-x).ln()).powf(self.lambda)
        } else if x <= self.tau {
            norm_cdf(x)
        } else {
            1.0 - self.tail_mass() * (self.ln_tau / x.ln()).powf(self.lambda)
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain {
                name: "u",
                value: u,
                range: "(0, 1)",
            });
        }
        Ok(self.quantile_open(u))
    }

    // `u` must lie in (0, 1).
    pub(crate) fn quantile_open(&self, u: f64) -> f64 {
        let tail = self.tail_mass();
        if u < tail {
            -self.tail_quantile(u / tail)
        } else if u > 1.0 - tail {
            self.tail_quantile((1.0 - u) / tail)
        } else {
            norm_quantile(u)
        }
    }

    // Solves (ln tau / ln x)^lambda = s for x > tau, s in (0, 1].
    fn tail_quantile(&self, s: f64) -> f64 {
        (self.ln_tau * s.powf(-1.0 / self.lambda)).exp()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile_open(u)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn p95() -> LptnParams {
        LptnParams::new(0.95).unwrap()
    }

    #[test]
    fn derived_constants() {
        let p = p95();
        assert!((p.tau - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((p.lambda - 3.083_353_622_139_72).abs() < 1e-10);
        let p99 = LptnParams::new(0.99).unwrap();
        assert!((p99.tau - 2.575_829_303_548_901).abs() < 1e-12);
        assert!((p99.lambda - 7.048_188_844_205_291).abs() < 1e-10);
    }

    #[test]
    fn rejects_rho_outside_open_interval() {
        for rho in [0.5, min_rho(), 1.0, 1.2, f64::NAN] {
            let err = LptnParams::new(rho).unwrap_err();
            assert!(err.to_string().contains("0.6827"), "{err}");
        }
    }

    #[test]
    fn boundary_rho_shrinks_tau_and_lambda() {
        let p = LptnParams::new(min_rho() + 1e-9).unwrap();
        assert!(p.tau > 1.0 && p.tau - 1.0 < 1e-6);
        assert!(p.lambda > 0.0 && p.lambda < 1e-5);
    }

    #[test]
    fn log_density_values() {
        let p = p95();
        assert!((p.ln_pdf(0.0) - (0.398_942_280_401_432_7f64).ln()).abs() < 1e-15);
        assert!((p.ln_pdf(10.0) + 9.492_473_423_893_001).abs() < 1e-12);
        assert!((p.ln_pdf(p.tau) - p.ln_pdf(p.tau + 1e-12)).abs() < 1e-8);
    }

    #[test]
    fn quantile_anchor_points() {
        let p = p95();
        assert_eq!(p.quantile(0.5).unwrap(), 0.0);
        assert!((p.quantile(0.975).unwrap() - p.tau).abs() < 1e-12);
        assert!((p.quantile(0.99).unwrap() - 2.473_888_746_569_379).abs() < 1e-12);
        assert!(p.quantile(0.0).is_err());
        assert!(p.quantile(1.0).is_err());
    }

    #[test]
    fn first_draw_is_quantile_of_first_uniform() {
        let p = p95();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u: f64 = rng.sample(Open01);
        assert_eq!(p.sample(1, 17), vec![p.quantile(u).unwrap()]);
    }

    #[test]
    fn core_fraction_matches_rho() {
        let p = p95();
        let draws = p.sample(100_000, 3);
        let inside = draws.iter().filter(|x| x.abs() <= p.tau).count() as f64 / 1e5;
        assert!((inside - 0.95).abs() < 0.01, "{inside}");
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = p95();
        for x in [-50.0, -3.0, -1.0, 0.3, 1.5, 2.5, 7.0, 1e4] {
            let h = 1e-6 * (1.0 + f64::abs(x));
            let fd = (p.ln_pdf(x + h) - p.ln_pdf(x - h)) / (2.0 * h);
            assert!((fd - p.d_ln_pdf(x)).abs() < 1e-6 * (1.0 + fd.abs()), "x = {x}");
        }
    }

    proptest! {
        #[test]
        fn symmetric(x in -1e6f64..1e6) {
            let p = p95();
            prop_assert_eq!(p.ln_pdf(x), p.ln_pdf(-x));
        }

        #[test]
        fn quantile_increasing(a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
            prop_assume!(b - a > 1e-9);
            let p = p95();
            prop_assert!(p.quantile(a).unwrap() < p.quantile(b).unwrap());
        }

        #[test]
        fn core_quantile_is_normal(u in 0.025f64..0.975) {
            let p = p95();
            prop_assert_eq!(p.quantile(u).unwrap(), norm_quantile(u));
        }
    }
}
