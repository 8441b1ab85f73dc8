//! Mixed NB regression with a single normal random intercept per group.
//!
//! The group-level integral of the marginal likelihood is evaluated by
//! adaptive Gauss–Hermite quadrature: per group, the integrand's mode and
//! curvature recenter and rescale the nodes before summation. One node is
//! the Laplace approximation. Gradients differentiate under the integral
//! with the adapted nodes held fixed; the neglected node-movement terms are
//! of the order of the quadrature error itself.

use super::nb::{lgamma_y_plus_one, NbTerms};
use super::{observed_information_se, Coefficient, FitResult, OptimizerConfig};
use crate::data::{DesignMatrix, Family};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::num::{pairwise_sum, Float};
use crate::optim::minimize;
use crate::quadrature::{gauss_hermite, GhNode};

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_741_8;

/// Marginal likelihood over `params = [beta(p)..., log_theta, log_sigma]`.
pub(crate) struct GlmmLik<'a, F> {
    x: &'a Mat<F>,
    y: &'a [u64],
    offset: &'a [F],
    groups: Vec<Vec<usize>>,
    nodes: Vec<GhNode<F>>,
    /// ln(w_k) + x_k^2, the log node coefficients of the adaptive rule.
    ln_coeff: Vec<F>,
    lgamma_y1: Vec<F>,
}

impl<'a, F: Float> GlmmLik<'a, F> {
    pub fn new(
        x: &'a Mat<F>,
        y: &'a [u64],
        offset: &'a [F],
        groups: Vec<Vec<usize>>,
        quadrature_points: usize,
    ) -> Self {
        let nodes = gauss_hermite::<F>(quadrature_points);
        let ln_coeff = nodes
            .iter()
            .map(|g| g.weight.ln() + g.node * g.node)
            .collect();
        Self {
            x,
            y,
            offset,
            groups,
            nodes,
            ln_coeff,
            lgamma_y1: lgamma_y_plus_one(y),
        }
    }

    fn split<'p>(&self, params: &'p [F]) -> (&'p [F], F, F) {
        let p = self.x.cols();
        (&params[..p], params[p].exp(), params[p + 1].exp())
    }

    fn base_etas(&self, beta: &[F]) -> Vec<F> {
        let mut etas = self.x.matvec(beta);
        for (eta, off) in etas.iter_mut().zip(self.offset) {
            *eta += *off;
        }
        etas
    }

    /// Log integrand for one group at intercept u:
    /// sum of member NB terms at eta + u, plus the normal prior density.
    fn log_h(&self, members: &[usize], etas: &[F], theta: F, sigma: F, u: F) -> F {
        let mut acc = F::zero();
        for &i in members {
            acc += NbTerms::loglik(self.y[i], etas[i] + u, theta, self.lgamma_y1[i]);
        }
        acc - u * u / (F::cast(2.0) * sigma * sigma) - sigma.ln() - F::cast(HALF_LN_TWO_PI)
    }

    fn d_log_h(&self, members: &[usize], etas: &[F], theta: F, sigma: F, u: F) -> (F, F) {
        let mut d1 = F::zero();
        let mut d2 = F::zero();
        for &i in members {
            d1 += NbTerms::d_eta(self.y[i], etas[i] + u, theta);
            d2 += NbTerms::d2_eta(self.y[i], etas[i] + u, theta);
        }
        let inv_var = (sigma * sigma).recip();
        (d1 - u * inv_var, d2 - inv_var)
    }

    /// Newton search for the integrand mode; the integrand is strictly
    /// log-concave so this converges fast. Returns (mode, curvature scale).
    fn group_mode(&self, members: &[usize], etas: &[F], theta: F, sigma: F) -> (F, F) {
        let mut u = F::zero();
        let mut h = self.log_h(members, etas, theta, sigma, u);
        for _ in 0..100 {
            let (d1, d2) = self.d_log_h(members, etas, theta, sigma, u);
            let mut step = -d1 / d2;
            // Step-halve until the objective does not decrease.
            let mut improved = false;
            for _ in 0..40 {
                let trial = u + step;
                let h_trial = self.log_h(members, etas, theta, sigma, trial);
                if h_trial >= h - F::cast(1e-14) * h.abs() {
                    if (trial - u).abs() <= F::cast(1e-13) * (F::one() + u.abs()) {
                        let (_, d2_final) = self.d_log_h(members, etas, theta, sigma, trial);
                        return (trial, (-d2_final).recip().sqrt());
                    }
                    u = trial;
                    h = h_trial;
                    improved = true;
                    break;
                }
                step = step * F::cast(0.5);
            }
            if !improved {
                break;
            }
        }
        let (_, d2) = self.d_log_h(members, etas, theta, sigma, u);
        (u, (-d2).recip().sqrt())
    }

    pub fn nll_grad(&self, params: &[F]) -> (F, Vec<F>) {
        let p = self.x.cols();
        let (beta, theta, sigma) = self.split(params);
        let etas = self.base_etas(beta);
        let sqrt2 = F::cast(core::f64::consts::SQRT_2);
        let inv_var = (sigma * sigma).recip();

        let mut group_lls = Vec::with_capacity(self.groups.len());
        let mut grad = vec![F::zero(); p + 2];

        for members in &self.groups {
            let (mode, tau) = self.group_mode(members, &etas, theta, sigma);

            // Adapted nodes and stable log-sum-exp across them.
            let mut log_terms = Vec::with_capacity(self.nodes.len());
            for (k, node) in self.nodes.iter().enumerate() {
                let u = mode + sqrt2 * tau * node.node;
                log_terms.push(self.ln_coeff[k] + self.log_h(members, &etas, theta, sigma, u));
            }
            let m = log_terms
                .iter()
                .fold(F::neg_infinity(), |a, &b| a.max(b));
            let sum_exp: F = log_terms.iter().map(|&t| (t - m).exp()).sum();
            group_lls.push(sqrt2.ln() + tau.ln() + m + sum_exp.ln());

            // Node-posterior-weighted scores, nodes held fixed.
            for (k, node) in self.nodes.iter().enumerate() {
                let weight = (log_terms[k] - m).exp() / sum_exp;
                if weight == F::zero() {
                    continue;
                }
                let u = mode + sqrt2 * tau * node.node;
                for &i in members {
                    let d_eta = NbTerms::d_eta(self.y[i], etas[i] + u, theta);
                    for (j, &xij) in self.x.row(i).iter().enumerate() {
                        grad[j] += weight * d_eta * xij;
                    }
                    grad[p] += weight * NbTerms::d_log_theta(self.y[i], etas[i] + u, theta);
                }
                // d/d log(sigma) of the prior term: u^2/sigma^2 - 1.
                grad[p + 1] += weight * (u * u * inv_var - F::one());
            }
        }

        let ll = pairwise_sum(&group_lls);
        for g in grad.iter_mut() {
            *g = -*g;
        }
        (-ll, grad)
    }
}

/// Fits the random-intercept GLMM-NB. A non-positive-definite observed
/// information is reported through `converged = false` and diagnostics
/// rather than an error: with one observation per section this outcome is
/// ordinary, and the fit is still useful for fixed-effects prediction.
pub fn fit_glmm_nb<F: Float>(
    design: &DesignMatrix<F>,
    cfg: &OptimizerConfig<F>,
) -> Result<FitResult<F>> {
    cfg.validate()?;
    design.validate()?;
    let groups = design
        .groups
        .as_ref()
        .ok_or_else(|| Error::Invalid("GLMM-NB requires a group index".to_string()))?;
    if groups.n_groups() < 2 {
        return Err(Error::Invalid(format!(
            "GLMM-NB needs at least 2 groups, got {}",
            groups.n_groups()
        )));
    }
    let p = design.x.cols();
    let n = design.n_obs();
    if n <= p + 2 {
        return Err(Error::Invalid(format!(
            "need more observations ({n}) than parameters ({})",
            p + 2
        )));
    }

    let nb_fit = super::fit_nb(design, cfg)?;
    let mut start: Vec<F> = nb_fit.count_estimates();
    start.push(nb_fit.theta.ln());
    start.push(F::cast(0.3).ln());

    let lik = GlmmLik::new(
        &design.x,
        &design.y,
        &design.offset,
        groups.members(),
        cfg.quadrature_points,
    );
    let outcome = minimize(|params| lik.nll_grad(params), &start, &cfg.bfgs());

    let mut converged = outcome.converged;
    let mut diagnostics = Vec::new();
    if !converged {
        diagnostics.push(format!(
            "did not converge in {} iterations; max |gradient| = {:e}",
            outcome.iterations, outcome.max_abs_gradient
        ));
    }

    let (_, se_outcome) =
        observed_information_se(|pt| lik.nll_grad(pt).1, &outcome.x, cfg.hessian_step);
    let std_errors = match se_outcome.std_errors {
        Some(se) => Some(se),
        None => {
            converged = false;
            diagnostics.push(
                "observed information not positive definite; variance components weakly identified"
                    .to_string(),
            );
            None
        }
    };

    let theta = outcome.x[p].exp();
    let sigma = outcome.x[p + 1].exp();
    let theta_se = std_errors.as_ref().map(|se| theta * se[p]);
    let sigma_se = std_errors.as_ref().map(|se| sigma * se[p + 1]);
    let coefficients = design
        .x_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            Coefficient::new(
                name.clone(),
                outcome.x[j],
                std_errors.as_ref().map(|se| se[j]),
            )
        })
        .collect();

    Ok(FitResult::assemble(
        Family::GlmmNb,
        coefficients,
        Vec::new(),
        theta,
        theta_se,
        Some(sigma),
        sigma_se,
        -outcome.value,
        n,
        p + 2,
        converged,
        outcome.iterations,
        outcome.max_abs_gradient,
        diagnostics,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_design, Direction, ModelSpec, SectionRecord, Term};
    use crate::optim::central_gradient;
    use std::collections::BTreeMap;

    fn grouped_design(counts: &[u64], x1: &[f64], n_groups: usize) -> DesignMatrix<f64> {
        let n = counts.len();
        let records: Vec<SectionRecord> = (0..n)
            .map(|i| SectionRecord {
                section_id: format!("s{i}"),
                route_id: Some(format!("R{}", i % n_groups)),
                direction: Direction::Both,
                crash_count: counts[i],
                aadt: 1.0,
                length_miles: 1.0,
                years_observed: 1.0,
                covariates: BTreeMap::from([("x1".to_string(), x1[i])]),
            })
            .collect();
        let spec = ModelSpec::new(
            Family::GlmmNb,
            vec![Term::Intercept, Term::covariate("x1")],
        )
        .with_group_by("route_id");
        build_design(&records, &spec).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let counts = [0u64, 2, 1, 0, 3, 1, 0, 0, 4, 2, 1, 0, 2, 3, 0, 1];
        let x1: Vec<f64> = (0..16).map(|i| ((i * 5) % 11) as f64 / 11.0 - 0.5).collect();
        let design = grouped_design(&counts, &x1, 4);
        let lik = GlmmLik::new(
            &design.x,
            &design.y,
            &design.offset,
            design.groups.as_ref().unwrap().members(),
            15,
        );
        for params in [
            vec![0.2, 0.3, 0.1, -0.8],
            vec![-0.4, -0.1, 0.5, -1.5],
            vec![0.1, 0.6, -0.3, -0.3],
        ] {
            let (_, analytic) = lik.nll_grad(&params);
            let fd = central_gradient(|pt| lik.nll_grad(pt).0, &params, 1e-6);
            for (a, f) in analytic.iter().zip(&fd) {
                let scale = a.abs().max(f.abs()).max(1.0);
                assert!(
                    (a - f).abs() / scale < 1e-6,
                    "analytic {a} vs fd {f} at {params:?}"
                );
            }
        }
    }

    // With sigma pinned near zero the marginal likelihood must agree with
    // the plain NB likelihood.
    #[test]
    fn collapses_to_nb_as_sigma_vanishes() {
        let counts = [1u64, 0, 2, 1, 3, 0, 1, 2];
        let x1 = [0.4, -0.2, 0.1, 0.6, -0.5, 0.3, 0.0, -0.1];
        let design = grouped_design(&counts, &x1, 2);
        let lik = GlmmLik::new(
            &design.x,
            &design.y,
            &design.offset,
            design.groups.as_ref().unwrap().members(),
            15,
        );
        let nb_lik = crate::estimation::nb::NbLik::new(&design.x, &design.y, &design.offset);
        let glmm_ll = -lik.nll_grad(&[0.2, 0.4, 0.1, -12.0]).0;
        let nb_ll = -nb_lik.nll_grad(&[0.2, 0.4, 0.1]).0;
        assert!((glmm_ll - nb_ll).abs() < 1e-6, "{glmm_ll} vs {nb_ll}");
    }

    #[test]
    fn quadrature_refinement_is_stable() {
        let counts = [0u64, 2, 1, 0, 3, 1, 0, 0, 4, 2, 1, 0, 2, 3, 0, 1, 1, 2, 0, 5];
        let x1: Vec<f64> = (0..20).map(|i| ((i * 5) % 13) as f64 / 13.0 - 0.5).collect();
        let design = grouped_design(&counts, &x1, 5);
        let members = design.groups.as_ref().unwrap().members();
        let params = vec![0.1, 0.3, 0.2, -0.7];
        let ll15 = -GlmmLik::new(&design.x, &design.y, &design.offset, members.clone(), 15)
            .nll_grad(&params)
            .0;
        let ll25 = -GlmmLik::new(&design.x, &design.y, &design.offset, members, 25)
            .nll_grad(&params)
            .0;
        assert!((ll15 - ll25).abs() < 1e-8, "{ll15} vs {ll25}");
    }

    #[test]
    fn one_group_is_invalid() {
        let counts = [1u64, 0, 2, 1, 3, 0, 1, 2];
        let x1 = [0.4, -0.2, 0.1, 0.6, -0.5, 0.3, 0.0, -0.1];
        let design = grouped_design(&counts, &x1, 1);
        assert!(matches!(
            fit_glmm_nb(&design, &OptimizerConfig::default()),
            Err(Error::Invalid(_))
        ));
    }
}
