//! Quasi-Newton minimization (BFGS with a backtracking Armijo line search)
//! and finite-difference utilities.
//!
//! The optimizer is deliberately self-contained and deterministic: the same
//! objective, start point, and configuration always walk the same path.

use crate::linalg::Mat;
use crate::num::Float;

#[derive(Debug, Clone)]
pub struct BfgsConfig<F> {
    /// Convergence threshold on the max absolute gradient component.
    pub gradient_tolerance: F,
    pub max_iterations: usize,
    /// Backtracking halvings allowed per line search.
    pub step_halving_limit: usize,
}

impl<F: Float> Default for BfgsConfig<F> {
    fn default() -> Self {
        Self {
            gradient_tolerance: F::cast(1e-6),
            max_iterations: 200,
            step_halving_limit: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome<F> {
    pub x: Vec<F>,
    pub value: F,
    pub gradient: Vec<F>,
    pub iterations: usize,
    pub converged: bool,
    pub max_abs_gradient: F,
    /// Human-readable notes on anything unusual (line-search stalls, resets).
    pub notes: Vec<String>,
}

fn max_abs<F: Float>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |m, &x| m.max(x.abs()))
}

fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Minimizes `objective`, which returns the function value and gradient
/// together (they almost always share work).
pub fn minimize<F, Obj>(objective: Obj, x0: &[F], cfg: &BfgsConfig<F>) -> BfgsOutcome<F>
where
    F: Float,
    Obj: Fn(&[F]) -> (F, Vec<F>),
{
    let n = x0.len();
    let c1 = F::cast(1e-4);
    let mut x = x0.to_vec();
    let (mut fx, mut grad) = objective(&x);
    let mut inv_hessian = Mat::identity(n);
    let mut notes = Vec::new();
    let mut iterations = 0;
    let mut converged = max_abs(&grad) < cfg.gradient_tolerance;
    let mut first_update = true;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;

        let mut direction: Vec<F> = inv_hessian.matvec(&grad).iter().map(|&v| -v).collect();
        let mut slope = dot(&grad, &direction);
        if !(slope < F::zero()) {
            // Curvature information went bad; restart from steepest descent.
            inv_hessian = Mat::identity(n);
            first_update = true;
            direction = grad.iter().map(|&g| -g).collect();
            slope = dot(&grad, &direction);
            if !(slope < F::zero()) {
                notes.push("zero gradient direction; stopping".to_string());
                break;
            }
        }

        // Backtracking line search with the Armijo condition, relaxed by a
        // machine-precision term: near the optimum the true decrease falls
        // below the rounding noise of the objective while the (analytic)
        // gradient still carries information, and rejecting those steps
        // stalls the search for good.
        let noise_floor = F::epsilon() * (F::one() + fx.abs()) * F::cast(4.0);
        let mut step = F::one();
        let mut accepted = None;
        for _ in 0..=cfg.step_halving_limit {
            let trial: Vec<F> = x
                .iter()
                .zip(&direction)
                .map(|(&xi, &di)| xi + step * di)
                .collect();
            let (f_trial, g_trial) = objective(&trial);
            if f_trial.is_finite() && f_trial <= fx + c1 * step * slope + noise_floor {
                accepted = Some((trial, f_trial, g_trial));
                break;
            }
            step = step * F::cast(0.5);
        }

        let (x_new, f_new, g_new) = match accepted {
            Some(t) => t,
            None => {
                if first_update {
                    notes.push("line search failed along steepest descent".to_string());
                    break;
                }
                // Retry once from a fresh steepest-descent state.
                inv_hessian = Mat::identity(n);
                first_update = true;
                continue;
            }
        };

        let s: Vec<F> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<F> = g_new.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        let s_norm = max_abs(&s);
        let y_norm = max_abs(&y);

        if sy > F::cast(1e-10) * s_norm * y_norm && sy.is_finite() {
            if first_update {
                // Scale the initial inverse Hessian (Nocedal & Wright eq. 6.20).
                let yy = dot(&y, &y);
                if yy > F::zero() {
                    let scale = sy / yy;
                    for i in 0..n {
                        inv_hessian[(i, i)] = scale;
                    }
                }
                first_update = false;
            }
            let rho = sy.recip();
            let hy = inv_hessian.matvec(&y);
            let yhy = dot(&y, &hy);
            let coeff = rho * rho * yhy + rho;
            for i in 0..n {
                for j in 0..n {
                    let update = coeff * s[i] * s[j] - rho * (s[i] * hy[j] + hy[i] * s[j]);
                    inv_hessian[(i, j)] += update;
                }
            }
        }

        x = x_new;
        fx = f_new;
        grad = g_new;
        converged = max_abs(&grad) < cfg.gradient_tolerance;
    }

    let max_abs_gradient = max_abs(&grad);
    BfgsOutcome {
        x,
        value: fx,
        gradient: grad,
        iterations,
        converged,
        max_abs_gradient,
        notes,
    }
}

/// Central-difference gradient with a relative step.
pub fn central_gradient<F, Fun>(f: Fun, x: &[F], rel_step: F) -> Vec<F>
where
    F: Float,
    Fun: Fn(&[F]) -> F,
{
    let mut out = Vec::with_capacity(x.len());
    let mut work = x.to_vec();
    for j in 0..x.len() {
        let h = rel_step * x[j].abs().max(F::one());
        work[j] = x[j] + h;
        let fp = f(&work);
        work[j] = x[j] - h;
        let fm = f(&work);
        work[j] = x[j];
        out.push((fp - fm) / (F::cast(2.0) * h));
    }
    out
}

/// Central-difference Jacobian of a gradient function, symmetrized. With the
/// gradient of a scalar objective this is its Hessian.
pub fn hessian_of_gradient<F, Grad>(grad: Grad, x: &[F], rel_step: F) -> Mat<F>
where
    F: Float,
    Grad: Fn(&[F]) -> Vec<F>,
{
    let n = x.len();
    let mut h = Mat::zeros(n, n);
    let mut work = x.to_vec();
    for j in 0..n {
        let step = rel_step * x[j].abs().max(F::one());
        work[j] = x[j] + step;
        let gp = grad(&work);
        work[j] = x[j] - step;
        let gm = grad(&work);
        work[j] = x[j];
        for i in 0..n {
            h[(i, j)] = (gp[i] - gm[i]) / (F::cast(2.0) * step);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (h[(i, j)] + h[(j, i)]) * F::cast(0.5);
            h[(i, j)] = s;
            h[(j, i)] = s;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> (f64, Vec<f64>) {
        // f = (x0-3)^2 + 10*(x1+1)^2, minimum at (3, -1)
        let f = (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2);
        let g = vec![2.0 * (x[0] - 3.0), 20.0 * (x[1] + 1.0)];
        (f, g)
    }

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (1.0, 100.0);
        let f = (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2);
        let g = vec![
            -2.0 * (a - x[0]) - 4.0 * b * x[0] * (x[1] - x[0] * x[0]),
            2.0 * b * (x[1] - x[0] * x[0]),
        ];
        (f, g)
    }

    #[test]
    fn minimizes_quadratic() {
        let out = minimize(quadratic, &[0.0, 0.0], &BfgsConfig::default());
        assert!(out.converged);
        assert!((out.x[0] - 3.0).abs() < 1e-6);
        assert!((out.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let cfg = BfgsConfig {
            max_iterations: 500,
            ..BfgsConfig::default()
        };
        let out = minimize(rosenbrock, &[-1.2, 1.0], &cfg);
        assert!(out.converged, "gradient norm {}", out.max_abs_gradient);
        assert!((out.x[0] - 1.0).abs() < 1e-5);
        assert!((out.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn deterministic_given_identical_inputs() {
        let a = minimize(rosenbrock, &[0.5, 0.5], &BfgsConfig::default());
        let b = minimize(rosenbrock, &[0.5, 0.5], &BfgsConfig::default());
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn central_gradient_matches_analytic() {
        let x = [0.3, -0.7];
        let fd = central_gradient(|v| quadratic(v).0, &x, 1e-6);
        let (_, g) = quadratic(&x);
        assert!((fd[0] - g[0]).abs() < 1e-6);
        assert!((fd[1] - g[1]).abs() < 1e-6);
    }

    #[test]
    fn hessian_of_quadratic_is_constant() {
        let h = hessian_of_gradient(|v| quadratic(v).1, &[0.1, 0.2], 1e-5);
        assert!((h[(0, 0)] - 2.0).abs() < 1e-6);
        assert!((h[(1, 1)] - 20.0).abs() < 1e-6);
        assert!(h[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn reports_non_convergence_within_budget() {
        let cfg = BfgsConfig {
            max_iterations: 3,
            ..BfgsConfig::default()
        };
        let out = minimize(rosenbrock, &[-1.2, 1.0], &cfg);
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
    }
}
