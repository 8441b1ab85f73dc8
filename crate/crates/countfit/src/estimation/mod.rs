//! Maximum-likelihood fitting of NB, ZINB, and random-intercept GLMM-NB rate
//! models, with the usual fit statistics: Wald standard errors and p-values,
//! log-likelihood, AIC/BIC, deviance residuals, and the Vuong test.
//!
//! Estimation is quasi-Newton (BFGS with backtracking) on the negative
//! log-likelihood with analytic gradients; `theta` and the random-intercept
//! SD are optimized on the log scale so positivity needs no constraints.
//! Standard errors come from the observed information — a central-difference
//! Hessian of the analytic gradient at the optimum.

mod diagnostics;
mod glmm;
mod nb;
mod zinb;

pub use diagnostics::{
    deviance, deviance_residuals, loglik_contributions, predict_mean, vuong_test,
    zero_probabilities, VuongResult,
};
pub use glmm::fit_glmm_nb;
pub use nb::fit_nb;
pub use zinb::fit_zinb;

use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrix, Family};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, Mat};
use crate::num::Float;
use crate::optim::BfgsConfig;
use crate::special::two_sided_p;

/// Tuning knobs for the optimizer and standard-error machinery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig<F> {
    /// Convergence threshold on the max absolute log-likelihood gradient.
    pub gradient_tolerance: F,
    pub max_iterations: usize,
    pub step_halving_limit: usize,
    /// Gauss–Hermite nodes for the GLMM group integral (odd; 1 = Laplace).
    pub quadrature_points: usize,
    /// Relative step for the central-difference Hessian of the gradient.
    pub hessian_step: F,
}

impl<F: Float> Default for OptimizerConfig<F> {
    fn default() -> Self {
        Self {
            gradient_tolerance: F::cast(1e-6),
            max_iterations: 200,
            step_halving_limit: 30,
            quadrature_points: 15,
            hessian_step: F::cast(1e-5),
        }
    }
}

impl<F: Float> OptimizerConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > F::zero()) {
            return Err(Error::Invalid("gradient_tolerance must be positive".into()));
        }
        if self.max_iterations == 0 || self.step_halving_limit == 0 {
            return Err(Error::Invalid(
                "iteration and step-halving limits must be positive".into(),
            ));
        }
        if self.quadrature_points == 0 || self.quadrature_points % 2 == 0 {
            return Err(Error::Invalid(format!(
                "quadrature_points must be odd and positive, got {}",
                self.quadrature_points
            )));
        }
        if !(self.hessian_step > F::zero()) {
            return Err(Error::Invalid("hessian_step must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn bfgs(&self) -> BfgsConfig<F> {
        BfgsConfig {
            gradient_tolerance: self.gradient_tolerance,
            max_iterations: self.max_iterations,
            step_halving_limit: self.step_halving_limit,
        }
    }
}

/// One estimated coefficient with its Wald statistics. Standard errors are
/// absent when the observed information could not be inverted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient<F> {
    pub name: String,
    pub estimate: F,
    pub std_error: Option<F>,
    pub z: Option<F>,
    pub p_value: Option<F>,
}

impl<F: Float> Coefficient<F> {
    fn new(name: String, estimate: F, std_error: Option<F>) -> Self {
        let z = std_error.map(|se| estimate / se);
        let p_value = z.map(two_sided_p);
        Self {
            name,
            estimate,
            std_error,
            z,
            p_value,
        }
    }
}

/// `AIC = 2 k - 2 LL`.
pub fn aic_of<F: Float>(n_params: usize, log_likelihood: F) -> F {
    F::cast(2.0) * F::from_count(n_params) - F::cast(2.0) * log_likelihood
}

/// `BIC = k ln(n) - 2 LL`.
pub fn bic_of<F: Float>(n_params: usize, log_likelihood: F, n_obs: usize) -> F {
    F::from_count(n_params) * F::from_count(n_obs).ln() - F::cast(2.0) * log_likelihood
}

/// A fitted model: estimates, dispersion, variance components, likelihood
/// statistics, and convergence diagnostics. Serializes to JSON with these
/// field names; this is the contract the GoF and reporting layers consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: serde::Serialize",
    deserialize = "F: serde::de::DeserializeOwned"
))]
pub struct FitResult<F> {
    pub family: Family,
    pub count_coefficients: Vec<Coefficient<F>>,
    #[serde(default)]
    pub zero_coefficients: Vec<Coefficient<F>>,
    pub theta: F,
    pub theta_std_error: Option<F>,
    #[serde(default)]
    pub random_intercept_sd: Option<F>,
    #[serde(default)]
    pub random_intercept_sd_std_error: Option<F>,
    pub log_likelihood: F,
    pub aic: F,
    pub bic: F,
    pub n_obs: usize,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub max_gradient_norm: F,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl<F: Float> FitResult<F> {
    /// Central constructor: computes AIC/BIC from their identities so they
    /// hold exactly for every instance.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        family: Family,
        count_coefficients: Vec<Coefficient<F>>,
        zero_coefficients: Vec<Coefficient<F>>,
        theta: F,
        theta_std_error: Option<F>,
        random_intercept_sd: Option<F>,
        random_intercept_sd_std_error: Option<F>,
        log_likelihood: F,
        n_obs: usize,
        n_params: usize,
        converged: bool,
        iterations: usize,
        max_gradient_norm: F,
        diagnostics: Vec<String>,
    ) -> Self {
        let aic = aic_of(n_params, log_likelihood);
        let bic = bic_of(n_params, log_likelihood, n_obs);
        debug_assert_eq!(aic, aic_of(n_params, log_likelihood));
        debug_assert_eq!(bic, bic_of(n_params, log_likelihood, n_obs));
        Self {
            family,
            count_coefficients,
            zero_coefficients,
            theta,
            theta_std_error,
            random_intercept_sd,
            random_intercept_sd_std_error,
            log_likelihood,
            aic,
            bic,
            n_obs,
            n_params,
            converged,
            iterations,
            max_gradient_norm,
            diagnostics,
        }
    }

    pub fn count_estimates(&self) -> Vec<F> {
        self.count_coefficients.iter().map(|c| c.estimate).collect()
    }

    pub fn zero_estimates(&self) -> Vec<F> {
        self.zero_coefficients.iter().map(|c| c.estimate).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<&Coefficient<F>> {
        self.count_coefficients.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Dispatches on the design's family.
pub fn fit(design: &DesignMatrix<f64>, family: Family, cfg: &OptimizerConfig<f64>) -> Result<FitResult<f64>> {
    match family {
        Family::Nb => fit_nb(design, cfg),
        Family::Zinb => fit_zinb(design, cfg),
        Family::GlmmNb => fit_glmm_nb(design, cfg),
    }
}

/// The negative log-likelihood and its analytic gradient as a closure over
/// the packed parameter vector, mainly for gradient verification and custom
/// optimization experiments.
///
/// Parameter layout: `[count coefficients.., log(theta)]` for NB,
/// `[count.., zero.., log(theta)]` for ZINB, and
/// `[count.., log(theta), log(sigma)]` for GLMM-NB.
pub fn negative_loglik_with_gradient<'d, F: Float>(
    design: &'d DesignMatrix<F>,
    family: Family,
    quadrature_points: usize,
) -> Result<Box<dyn Fn(&[F]) -> (F, Vec<F>) + 'd>> {
    design.validate()?;
    match family {
        Family::Nb => {
            let lik = nb::NbLik::new(&design.x, &design.y, &design.offset);
            Ok(Box::new(move |params| lik.nll_grad(params)))
        }
        Family::Zinb => {
            let z = design
                .z
                .as_ref()
                .ok_or_else(|| Error::Invalid("ZINB requires a zero-part matrix".to_string()))?;
            let lik = zinb::ZinbLik::new(&design.x, z, &design.y, &design.offset);
            Ok(Box::new(move |params| lik.nll_grad(params)))
        }
        Family::GlmmNb => {
            let groups = design
                .groups
                .as_ref()
                .ok_or_else(|| Error::Invalid("GLMM-NB requires a group index".to_string()))?;
            let lik = glmm::GlmmLik::new(
                &design.x,
                &design.y,
                &design.offset,
                groups.members(),
                quadrature_points,
            );
            Ok(Box::new(move |params| lik.nll_grad(params)))
        }
    }
}

/// Shared standard-error machinery: inverts the observed information
/// (the finite-difference Hessian of the negative-log-likelihood gradient).
pub(crate) struct SeOutcome<F> {
    pub std_errors: Option<Vec<F>>,
    /// Pivot index where the Cholesky factorization failed, if it did.
    pub failed_pivot: Option<usize>,
}

pub(crate) fn observed_information_se<F, G>(
    grad: G,
    at: &[F],
    rel_step: F,
) -> (Mat<F>, SeOutcome<F>)
where
    F: Float,
    G: Fn(&[F]) -> Vec<F>,
{
    let info = crate::optim::hessian_of_gradient(grad, at, rel_step);
    let outcome = match spd_inverse(&info) {
        Ok(cov) => {
            let ses = (0..at.len())
                .map(|j| {
                    let v = cov[(j, j)];
                    if v > F::zero() {
                        v.sqrt()
                    } else {
                        F::nan()
                    }
                })
                .collect();
            SeOutcome {
                std_errors: Some(ses),
                failed_pivot: None,
            }
        }
        Err(pivot) => SeOutcome {
            std_errors: None,
            failed_pivot: Some(pivot),
        },
    };
    (info, outcome)
}

/// Clamp for linear predictors before exponentiation, placed well inside the
/// overflow boundary of the scalar type.
pub(crate) fn eta_cap<F: Float>() -> F {
    F::max_value().ln() * F::cast(0.7)
}
