//! Negative Binomial regression by joint maximum likelihood over
//! (coefficients, log theta).

use super::{
    eta_cap, observed_information_se, Coefficient, FitResult, OptimizerConfig,
};
use crate::data::{DesignMatrix, Family};
use crate::error::{Error, Result};
use crate::linalg::{spd_solve, Mat};
use crate::num::{pairwise_sum, Float};
use crate::optim::minimize;
use crate::special::{digamma_ratio, ln_gamma, ln_gamma_ratio};

/// Per-observation NB log-likelihood pieces shared by NB, ZINB, and GLMM.
///
/// With `eta` the linear predictor (including offset) and `theta` the
/// dispersion:
///   l = lgamma(y+theta) - lgamma(theta) - lgamma(y+1)
///       - theta ln1p(lambda/theta) + y (ln lambda - ln(theta+lambda))
pub(crate) struct NbTerms;

impl NbTerms {
    pub fn loglik<F: Float>(y: u64, eta: F, theta: F, lgamma_y1: F) -> F {
        let lambda = eta.min(eta_cap()).exp();
        let zero_term = -theta * (lambda / theta).ln_1p();
        if y == 0 {
            return zero_term;
        }
        let yf = F::cast(y as f64);
        ln_gamma_ratio(theta, y) - lgamma_y1 + zero_term
            + yf * (lambda.ln() - (theta + lambda).ln())
    }

    /// d l / d eta = theta (y - lambda) / (theta + lambda)
    pub fn d_eta<F: Float>(y: u64, eta: F, theta: F) -> F {
        let lambda = eta.min(eta_cap()).exp();
        theta * (F::cast(y as f64) - lambda) / (theta + lambda)
    }

    /// d l / d log(theta)
    pub fn d_log_theta<F: Float>(y: u64, eta: F, theta: F) -> F {
        let lambda = eta.min(eta_cap()).exp();
        let yf = F::cast(y as f64);
        theta
            * (digamma_ratio(theta, y) + F::one()
                - (lambda / theta).ln_1p()
                - (theta + yf) / (theta + lambda))
    }

    /// d^2 l / d eta^2 = -theta lambda (theta + y) / (theta + lambda)^2
    pub fn d2_eta<F: Float>(y: u64, eta: F, theta: F) -> F {
        let lambda = eta.min(eta_cap()).exp();
        let denom = theta + lambda;
        -theta * lambda * (theta + F::cast(y as f64)) / (denom * denom)
    }
}

pub(crate) fn lgamma_y_plus_one<F: Float>(y: &[u64]) -> Vec<F> {
    y.iter()
        .map(|&yi| {
            if yi <= 1 {
                F::zero()
            } else {
                ln_gamma(F::cast(yi as f64) + F::one())
            }
        })
        .collect()
}

/// NB likelihood over `params = [beta.., log_theta]`.
pub(crate) struct NbLik<'a, F> {
    pub x: &'a Mat<F>,
    pub y: &'a [u64],
    pub offset: &'a [F],
    pub lgamma_y1: Vec<F>,
}

impl<'a, F: Float> NbLik<'a, F> {
    pub fn new(x: &'a Mat<F>, y: &'a [u64], offset: &'a [F]) -> Self {
        Self {
            x,
            y,
            offset,
            lgamma_y1: lgamma_y_plus_one(y),
        }
    }

    fn etas(&self, beta: &[F]) -> Vec<F> {
        let mut etas = self.x.matvec(beta);
        for (eta, off) in etas.iter_mut().zip(self.offset) {
            *eta += *off;
        }
        etas
    }

    pub fn loglik_terms(&self, params: &[F]) -> Vec<F> {
        let (beta, log_theta) = params.split_at(self.x.cols());
        let theta = log_theta[0].exp();
        self.etas(beta)
            .iter()
            .zip(self.y)
            .zip(&self.lgamma_y1)
            .map(|((&eta, &y), &lg)| NbTerms::loglik(y, eta, theta, lg))
            .collect()
    }

    /// Negative log-likelihood and its gradient.
    pub fn nll_grad(&self, params: &[F]) -> (F, Vec<F>) {
        let p = self.x.cols();
        let (beta, log_theta) = params.split_at(p);
        let theta = log_theta[0].exp();
        let etas = self.etas(beta);
        let n = self.y.len();

        let mut terms = Vec::with_capacity(n);
        let mut score_eta = Vec::with_capacity(n);
        let mut score_log_theta = F::zero();
        for i in 0..n {
            let (y, eta) = (self.y[i], etas[i]);
            terms.push(NbTerms::loglik(y, eta, theta, self.lgamma_y1[i]));
            score_eta.push(NbTerms::d_eta(y, eta, theta));
            score_log_theta += NbTerms::d_log_theta(y, eta, theta);
        }
        let ll = pairwise_sum(&terms);

        let mut grad = self.x.t_matvec(&score_eta);
        grad.push(score_log_theta);
        for g in grad.iter_mut() {
            *g = -*g;
        }
        (-ll, grad)
    }
}

/// Two iterations of Poisson IRLS for starting coefficients.
pub(crate) fn poisson_irls_start<F: Float>(
    x: &Mat<F>,
    y: &[u64],
    offset: &[F],
    names: &[String],
) -> Result<Vec<F>> {
    let n = y.len();
    let mut mu: Vec<F> = y
        .iter()
        .map(|&yi| F::cast(yi as f64) + F::cast(0.5))
        .collect();
    let mut beta = vec![F::zero(); x.cols()];
    for _ in 0..2 {
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let eta = mu[i].ln();
            z.push(eta - offset[i] + (F::cast(y[i] as f64) - mu[i]) / mu[i]);
        }
        let xtwx = x.xtwx(&mu);
        let wz: Vec<F> = mu.iter().zip(&z).map(|(&w, &zi)| w * zi).collect();
        let xtwz = x.t_matvec(&wz);
        beta = spd_solve(&xtwx, &xtwz).map_err(|pivot| Error::SingularHessian {
            columns: vec![names[pivot].clone()],
        })?;
        let cap = F::cast(30.0);
        let etas = x.matvec(&beta);
        for i in 0..n {
            mu[i] = (etas[i] + offset[i]).min(cap).max(-cap).exp();
        }
    }
    Ok(beta)
}

fn param_names(x_names: &[String]) -> Vec<String> {
    let mut names: Vec<String> = x_names.to_vec();
    names.push("log(theta)".to_string());
    names
}

/// Fits an NB regression with log link and offset.
pub fn fit_nb<F: Float>(design: &DesignMatrix<F>, cfg: &OptimizerConfig<F>) -> Result<FitResult<F>> {
    cfg.validate()?;
    design.validate()?;
    let p = design.x.cols();
    let n = design.n_obs();
    if n <= p + 1 {
        return Err(Error::Invalid(format!(
            "need more observations ({n}) than parameters ({})",
            p + 1
        )));
    }

    let lik = NbLik::new(&design.x, &design.y, &design.offset);
    let mut start = poisson_irls_start(&design.x, &design.y, &design.offset, &design.x_names)?;
    start.push(F::zero()); // log theta = 0

    let outcome = minimize(|params| lik.nll_grad(params), &start, &cfg.bfgs());

    let mut diagnostics = Vec::new();
    if !outcome.converged {
        diagnostics.push(format!(
            "did not converge in {} iterations; max |gradient| = {:e}",
            outcome.iterations, outcome.max_abs_gradient
        ));
    }

    let (_, se_outcome) =
        observed_information_se(|p| lik.nll_grad(p).1, &outcome.x, cfg.hessian_step);
    let std_errors = match (se_outcome.std_errors, se_outcome.failed_pivot) {
        (Some(se), _) => Some(se),
        (None, Some(pivot)) if outcome.converged => {
            return Err(Error::SingularHessian {
                columns: vec![param_names(&design.x_names)[pivot].clone()],
            });
        }
        (None, _) => {
            diagnostics.push("observed information not positive definite".to_string());
            None
        }
    };

    let theta = outcome.x[p].exp();
    let theta_se = std_errors.as_ref().map(|se| theta * se[p]);
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
        Family::Nb,
        coefficients,
        Vec::new(),
        theta,
        theta_se,
        None,
        None,
        -outcome.value,
        n,
        p + 1,
        outcome.converged,
        outcome.iterations,
        outcome.max_abs_gradient,
        diagnostics,
    ))
}
