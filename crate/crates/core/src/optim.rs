//! BFGS minimizer with a backtracking line search.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Gradient tolerance reached.
    pub converged: bool,
    /// The line search could not decrease the objective any further before
    /// the gradient tolerance was met (typically a kink of the objective).
    pub stalled: bool,
}

/// Minimizes `f` starting at `x0`. `fg` returns the value and gradient.
pub fn minimize<F>(fg: F, x0: DVector<f64>, opts: BfgsOptions) -> BfgsOutcome
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let dim = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = fg(&x);
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut fresh = true;

    for iter in 0..opts.max_iter {
        let gnorm = g.norm();
        if gnorm < opts.grad_tol {
            return outcome(x, fx, gnorm, iter, true, false);
        }
        let mut dir = -(&h * &g);
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            h.fill_with_identity();
            fresh = true;
            dir = -g.clone();
            slope = -gnorm * gnorm;
        }

        match line_search(&fg, &x, fx, &dir, slope) {
            Some((_, x_new, f_new, g_new)) => {
                let s = &x_new - &x;
                let yv = &g_new - &g;
                let sy = s.dot(&yv);
                if sy > 1e-12 * s.norm() * yv.norm() {
                    if fresh {
                        // Shanno-Phua initial scaling
                        h *= sy / yv.norm_squared();
                        fresh = false;
                    }
                    let rho = 1.0 / sy;
                    let hy = &h * &yv;
                    let yhy = yv.dot(&hy);
                    // H+ = H - ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
                    h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
                    h += (&s * s.transpose()) * (rho * rho * yhy + rho);
                }
                x = x_new;
                fx = f_new;
                g = g_new;
            }
            None if !fresh => {
                h.fill_with_identity();
                fresh = true;
            }
            None => {
                let gnorm = g.norm();
                return outcome(x, fx, gnorm, iter, false, true);
            }
        }
    }
    let gnorm = g.norm();
    let converged = gnorm < opts.grad_tol;
    outcome(x, fx, gnorm, opts.max_iter, converged, false)
}

fn outcome(
    x: DVector<f64>,
    value: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
    stalled: bool,
) -> BfgsOutcome {
    BfgsOutcome {
        x,
        value,
        grad_norm,
        iterations,
        converged,
        stalled,
    }
}

type Trial = (f64, DVector<f64>, f64, DVector<f64>);

// Armijo backtracking that prefers steps also meeting the curvature
// condition; expands once when the unit step is accepted with a steep slope.
fn line_search<F>(fg: &F, x: &DVector<f64>, fx: f64, dir: &DVector<f64>, slope: f64) -> Option<Trial>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let mut step = 1.0;
    let mut best: Option<Trial> = None;
    for _ in 0..60 {
        let x_new = x + dir * step;
        let (f_new, g_new) = fg(&x_new);
        if f_new.is_finite() && f_new <= fx + C1 * step * slope {
            let curvature_ok = g_new.dot(dir) >= C2 * slope;
            if curvature_ok || best.is_some() {
                return Some(best.unwrap_or((step, x_new, f_new, g_new)));
            }
            // sufficient decrease but still steep: try a longer step once
            best = Some((step, x_new, f_new, g_new));
            let x_long = x + dir * (2.0 * step);
            let (f_long, g_long) = fg(&x_long);
            if f_long.is_finite() && f_long < best.as_ref().unwrap().2 {
                return Some((2.0 * step, x_long, f_long, g_long));
            }
            return best;
        }
        step *= 0.5;
        if step * dir.norm() < 1e-16 * (1.0 + x.norm()) {
            break;
        }
    }
    best
}
