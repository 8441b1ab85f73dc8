//! Zero-inflated NB regression: an NB count process whose zeros are mixed
//! with a structural-zero state governed by a binary logit model. Fitted by
//! direct joint maximization over (count coefficients, zero coefficients,
//! log theta) — no EM.

use super::nb::{lgamma_y_plus_one, NbTerms};
use super::{
    eta_cap, observed_information_se, Coefficient, FitResult, OptimizerConfig,
};
use crate::data::{DesignMatrix, Family};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, Mat};
use crate::num::{pairwise_sum, Float};
use crate::optim::minimize;
use crate::special::{ln_add_exp, sigmoid, softplus};

/// ZINB likelihood over `params = [beta(p)..., gamma(q)..., log_theta]`.
pub(crate) struct ZinbLik<'a, F> {
    x: &'a Mat<F>,
    z: &'a Mat<F>,
    y: &'a [u64],
    offset: &'a [F],
    lgamma_y1: Vec<F>,
}

impl<'a, F: Float> ZinbLik<'a, F> {
    pub fn new(x: &'a Mat<F>, z: &'a Mat<F>, y: &'a [u64], offset: &'a [F]) -> Self {
        Self {
            x,
            z,
            y,
            offset,
            lgamma_y1: lgamma_y_plus_one(y),
        }
    }

    fn split<'p>(&self, params: &'p [F]) -> (&'p [F], &'p [F], F) {
        let p = self.x.cols();
        let q = self.z.cols();
        (&params[..p], &params[p..p + q], params[p + q].exp())
    }

    fn linear_predictors(&self, beta: &[F], gamma: &[F]) -> (Vec<F>, Vec<F>) {
        let mut eta1 = self.x.matvec(beta);
        for (eta, off) in eta1.iter_mut().zip(self.offset) {
            *eta += *off;
        }
        (eta1, self.z.matvec(gamma))
    }

    /// Per-observation log-likelihood:
    ///   y = 0: ln(exp(eta2) + P0) - ln(1 + exp(eta2))
    ///   y > 0: -softplus(eta2) + NB term
    /// with P0 the NB zero probability; everything stays in log space.
    pub fn loglik_terms(&self, params: &[F]) -> Vec<F> {
        let (beta, gamma, theta) = self.split(params);
        let (eta1, eta2) = self.linear_predictors(beta, gamma);
        (0..self.y.len())
            .map(|i| self.term(self.y[i], eta1[i], eta2[i], theta, self.lgamma_y1[i]))
            .collect()
    }

    fn term(&self, y: u64, eta1: F, eta2: F, theta: F, lgamma_y1: F) -> F {
        if y == 0 {
            let lambda = eta1.min(eta_cap()).exp();
            let ln_p0 = -theta * (lambda / theta).ln_1p();
            ln_add_exp(eta2, ln_p0) - softplus(eta2)
        } else {
            -softplus(eta2) + NbTerms::loglik(y, eta1, theta, lgamma_y1)
        }
    }

    pub fn nll_grad(&self, params: &[F]) -> (F, Vec<F>) {
        let p = self.x.cols();
        let q = self.z.cols();
        let (beta, gamma, theta) = self.split(params);
        let (eta1, eta2) = self.linear_predictors(beta, gamma);
        let n = self.y.len();

        let mut terms = Vec::with_capacity(n);
        let mut score_eta1 = Vec::with_capacity(n);
        let mut score_eta2 = Vec::with_capacity(n);
        let mut score_log_theta = F::zero();

        for i in 0..n {
            let (y, e1, e2) = (self.y[i], eta1[i], eta2[i]);
            let s = sigmoid(e2);
            if y == 0 {
                let lambda = e1.min(eta_cap()).exp();
                let ln_p0 = -theta * (lambda / theta).ln_1p();
                terms.push(ln_add_exp(e2, ln_p0) - softplus(e2));
                // Posterior split between the structural-zero state and the
                // NB zero, via a stable two-way softmax.
                let m = e2.max(ln_p0);
                let ea = (e2 - m).exp();
                let eb = (ln_p0 - m).exp();
                let w_struct = ea / (ea + eb);
                let w_nb = eb / (ea + eb);
                score_eta2.push(w_struct - s);
                score_eta1.push(w_nb * (-theta * lambda / (theta + lambda)));
                // d ln_p0 / d log(theta) = theta (lambda/(theta+lambda) - ln1p(lambda/theta))
                score_log_theta += w_nb
                    * theta
                    * (lambda / (theta + lambda) - (lambda / theta).ln_1p());
            } else {
                terms.push(-softplus(e2) + NbTerms::loglik(y, e1, theta, self.lgamma_y1[i]));
                score_eta2.push(-s);
                score_eta1.push(NbTerms::d_eta(y, e1, theta));
                score_log_theta += NbTerms::d_log_theta(y, e1, theta);
            }
        }

        let ll = pairwise_sum(&terms);
        let mut grad = Vec::with_capacity(p + q + 1);
        grad.extend(self.x.t_matvec(&score_eta1));
        grad.extend(self.z.t_matvec(&score_eta2));
        grad.push(score_log_theta);
        for g in grad.iter_mut() {
            *g = -*g;
        }
        (-ll, grad)
    }

    /// Fitted zero-inflation probabilities.
    pub fn zero_probs(&self, params: &[F]) -> Vec<F> {
        let (_, gamma, _) = self.split(params);
        self.z.matvec(gamma).iter().map(|&e| sigmoid(e)).collect()
    }
}

fn logit<F: Float>(p: F) -> F {
    (p / (F::one() - p)).ln()
}

fn param_names<F: Float>(design: &DesignMatrix<F>) -> Vec<String> {
    let mut names = design.x_names.clone();
    names.extend(design.z_names.iter().map(|n| format!("zero:{n}")));
    names.push("log(theta)".to_string());
    names
}

/// Fits a ZINB regression. The warm start takes the count part from an NB
/// fit and opens the zero part at the observed excess-zero fraction (floored
/// at 5%); after convergence the NB-embedded point (zero part pushed to
/// -infinity) is checked so the mixture never ends below its nested NB.
pub fn fit_zinb<F: Float>(
    design: &DesignMatrix<F>,
    cfg: &OptimizerConfig<F>,
) -> Result<FitResult<F>> {
    cfg.validate()?;
    design.validate()?;
    let z = design
        .z
        .as_ref()
        .ok_or_else(|| Error::Invalid("ZINB requires a zero-part design matrix".to_string()))?;
    let p = design.x.cols();
    let q = z.cols();
    let n = design.n_obs();
    if n <= p + q + 1 {
        return Err(Error::Invalid(format!(
            "need more observations ({n}) than parameters ({})",
            p + q + 1
        )));
    }

    // Warm start from the nested NB model.
    let nb_fit = super::fit_nb(design, cfg)?;
    let nb_beta: Vec<F> = nb_fit.count_estimates();
    let log_theta_start = nb_fit.theta.ln();

    let zero_frac = F::from_count(design.y.iter().filter(|&&y| y == 0).count())
        / F::from_count(n);
    // Mean NB-implied zero probability at the warm-start parameters.
    let theta_start = log_theta_start.exp();
    let mut etas = design.x.matvec(&nb_beta);
    for (eta, off) in etas.iter_mut().zip(&design.offset) {
        *eta += *off;
    }
    let p0_nb = pairwise_sum(
        &etas
            .iter()
            .map(|&eta| (-theta_start * (eta.min(eta_cap()).exp() / theta_start).ln_1p()).exp())
            .collect::<Vec<_>>(),
    ) / F::from_count(n);
    // Excess zeros relative to what the NB start already explains.
    let denom = (F::one() - p0_nb).max(F::cast(1e-6));
    let excess = ((zero_frac - p0_nb) / denom)
        .max(F::cast(0.05))
        .min(F::cast(0.95));

    let lik = ZinbLik::new(&design.x, z, &design.y, &design.offset);
    let mut start = nb_beta.clone();
    start.push(logit(excess));
    start.extend(vec![F::zero(); q - 1]);
    start.push(log_theta_start);

    let mut outcome = minimize(|params| lik.nll_grad(params), &start, &cfg.bfgs());

    // The NB model is nested at w == 0 (zero-part intercept -> -inf). If the
    // mixture search landed below that boundary value, restart from it.
    let mut embedded = nb_beta;
    embedded.push(F::cast(-30.0));
    embedded.extend(vec![F::zero(); q - 1]);
    embedded.push(log_theta_start);
    let (embedded_nll, _) = lik.nll_grad(&embedded);
    if embedded_nll + F::cast(1e-9) < outcome.value {
        let retry = minimize(|params| lik.nll_grad(params), &embedded, &cfg.bfgs());
        if retry.value < outcome.value {
            outcome = retry;
        }
    }

    let mut diagnostics = Vec::new();
    if !outcome.converged {
        diagnostics.push(format!(
            "did not converge in {} iterations; max |gradient| = {:e}",
            outcome.iterations, outcome.max_abs_gradient
        ));
    }

    let zero_probs = lik.zero_probs(&outcome.x);
    let max_w = zero_probs.iter().fold(F::zero(), |m, &w| m.max(w));
    let unidentified = max_w < F::cast(1e-3);
    if unidentified {
        diagnostics.push(
            "zero-inflation unidentified: all fitted zero-inflation probabilities below 0.001"
                .to_string(),
        );
    }

    let (info, se_outcome) =
        observed_information_se(|pt| lik.nll_grad(pt).1, &outcome.x, cfg.hessian_step);
    let names = param_names(design);
    let (count_se, zero_se, log_theta_se) = match (se_outcome.std_errors, se_outcome.failed_pivot)
    {
        (Some(se), _) => (
            Some(se[..p].to_vec()),
            Some(se[p..p + q].to_vec()),
            Some(se[p + q]),
        ),
        (None, Some(pivot)) => {
            if unidentified || !outcome.converged {
                // The zero part carries no information; report the count-part
                // block alone so its estimates stay usable.
                diagnostics.push(
                    "standard errors from the count-part information block only".to_string(),
                );
                let mut idx: Vec<usize> = (0..p).collect();
                idx.push(p + q);
                let mut sub = Mat::zeros(idx.len(), idx.len());
                for (a, &ia) in idx.iter().enumerate() {
                    for (b, &ib) in idx.iter().enumerate() {
                        sub[(a, b)] = info[(ia, ib)];
                    }
                }
                match spd_inverse(&sub) {
                    Ok(cov) => {
                        let se: Vec<F> = (0..idx.len()).map(|j| cov[(j, j)].sqrt()).collect();
                        (Some(se[..p].to_vec()), None, Some(se[p]))
                    }
                    Err(_) => {
                        diagnostics
                            .push("observed information not positive definite".to_string());
                        (None, None, None)
                    }
                }
            } else {
                return Err(Error::SingularHessian {
                    columns: vec![names[pivot].clone()],
                });
            }
        }
        (None, None) => (None, None, None),
    };

    let theta = outcome.x[p + q].exp();
    let theta_se = log_theta_se.map(|se| theta * se);
    let count_coefficients = design
        .x_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            Coefficient::new(
                name.clone(),
                outcome.x[j],
                count_se.as_ref().map(|se| se[j]),
            )
        })
        .collect();
    let zero_coefficients = design
        .z_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            Coefficient::new(
                name.clone(),
                outcome.x[p + j],
                zero_se.as_ref().map(|se| se[j]),
            )
        })
        .collect();

    Ok(FitResult::assemble(
        Family::Zinb,
        count_coefficients,
        zero_coefficients,
        theta,
        theta_se,
        None,
        None,
        -outcome.value,
        n,
        p + q + 1,
        outcome.converged,
        outcome.iterations,
        outcome.max_abs_gradient,
        diagnostics,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_design, Direction, ModelSpec, SectionRecord, Term};
    use crate::estimation::nb::NbLik;
    use crate::optim::central_gradient;
    use std::collections::BTreeMap;

    fn zinb_design(counts: &[u64], x1: &[f64], z1: &[f64]) -> DesignMatrix<f64> {
        let records: Vec<SectionRecord> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| SectionRecord {
                section_id: format!("s{i}"),
                route_id: None,
                direction: Direction::Both,
                crash_count: c,
                aadt: 1.0,
                length_miles: 1.0,
                years_observed: 1.0,
                covariates: BTreeMap::from([
                    ("x1".to_string(), x1[i]),
                    ("z1".to_string(), z1[i]),
                ]),
            })
            .collect();
        let spec = ModelSpec::new(
            Family::Zinb,
            vec![Term::Intercept, Term::covariate("x1")],
        )
        .with_zero_terms(vec![Term::Intercept, Term::covariate("z1")]);
        build_design(&records, &spec).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let counts = [0u64, 2, 0, 1, 4, 0, 0, 3, 1, 0, 5, 2];
        let x1: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 / 5.0 - 0.4).collect();
        let z1: Vec<f64> = (0..12).map(|i| ((i * 3) % 7) as f64 / 7.0 - 0.5).collect();
        let design = zinb_design(&counts, &x1, &z1);
        let lik = ZinbLik::new(
            &design.x,
            design.z.as_ref().unwrap(),
            &design.y,
            &design.offset,
        );
        for params in [
            vec![0.2, 0.1, -0.5, 0.3, 0.1],
            vec![-0.3, 0.5, 0.8, -0.4, -0.2],
            vec![0.0, 0.0, -2.0, 1.0, 0.4],
        ] {
            let (_, analytic) = lik.nll_grad(&params);
            let fd = central_gradient(|pt| lik.nll_grad(pt).0, &params, 1e-6);
            for (a, f) in analytic.iter().zip(&fd) {
                let scale = a.abs().max(f.abs()).max(1.0);
                assert!((a - f).abs() / scale < 1e-7, "analytic {a} vs fd {f}");
            }
        }
    }

    #[test]
    fn loglik_term_at_w_zero_matches_nb() {
        let counts = [0u64, 2, 0, 1, 4, 0];
        let x1 = [0.1, -0.2, 0.4, 0.0, 0.6, -0.5];
        let z1 = [0.3, -0.1, 0.2, -0.4, 0.5, 0.0];
        let design = zinb_design(&counts, &x1, &z1);
        let lik = ZinbLik::new(
            &design.x,
            design.z.as_ref().unwrap(),
            &design.y,
            &design.offset,
        );
        let nb_lik = NbLik::new(&design.x, &design.y, &design.offset);
        // gamma0 = -40 puts w at ~4e-18: mixture collapses to the NB.
        let zinb_terms = lik.loglik_terms(&[0.3, 0.2, -40.0, 0.0, 0.1]);
        let nb_terms = nb_lik.loglik_terms(&[0.3, 0.2, 0.1]);
        for (a, b) in zinb_terms.iter().zip(&nb_terms) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}
