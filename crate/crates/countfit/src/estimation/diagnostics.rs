//! Post-fit operations: mean predictions, deviance residuals, per-observation
//! likelihood contributions, and the Vuong test for non-nested comparison.

use super::nb::NbLik;
use super::zinb::ZinbLik;
use super::{eta_cap, FitResult};
use crate::data::{DesignMatrix, Family};
use crate::error::{Error, Result};
use crate::num::{pairwise_sum, Float};
use crate::special::{sigmoid, two_sided_p};

fn check_names(expected: &[String], actual: &[super::Coefficient<impl Float>], part: &str) -> Result<()> {
    let actual_names: Vec<&String> = actual.iter().map(|c| &c.name).collect();
    if expected.len() != actual_names.len()
        || !expected.iter().zip(&actual_names).all(|(a, b)| &a == b)
    {
        return Err(Error::Schema(format!(
            "{part} columns {:?} do not match fitted coefficients {:?}",
            expected, actual_names
        )));
    }
    Ok(())
}

fn count_linear_predictor<F: Float>(fit: &FitResult<F>, design: &DesignMatrix<F>) -> Result<Vec<F>> {
    check_names(&design.x_names, &fit.count_coefficients, "design")?;
    let beta = fit.count_estimates();
    let mut etas = design.x.matvec(&beta);
    for (eta, off) in etas.iter_mut().zip(&design.offset) {
        *eta += *off;
    }
    Ok(etas)
}

/// Fitted zero-inflation probabilities; `None` for families without a zero
/// part.
pub fn zero_probabilities<F: Float>(
    fit: &FitResult<F>,
    design: &DesignMatrix<F>,
) -> Result<Option<Vec<F>>> {
    if fit.family != Family::Zinb {
        return Ok(None);
    }
    let z = design
        .z
        .as_ref()
        .ok_or_else(|| Error::Schema("design has no zero-part matrix".to_string()))?;
    check_names(&design.z_names, &fit.zero_coefficients, "zero-part design")?;
    let gamma = fit.zero_estimates();
    Ok(Some(z.matvec(&gamma).iter().map(|&e| sigmoid(e)).collect()))
}

/// Predicted unconditional mean per observation.
///
/// NB and GLMM-NB use `exp(x beta + offset)` — for the mixed model the
/// variance components are not used for prediction, only the fixed effects.
/// ZINB returns `(1 - w) exp(x beta + offset)` so the prediction is the
/// unconditional mean of the mixture.
pub fn predict_mean<F: Float>(fit: &FitResult<F>, design: &DesignMatrix<F>) -> Result<Vec<F>> {
    let etas = count_linear_predictor(fit, design)?;
    let mut means: Vec<F> = etas.iter().map(|&e| e.min(eta_cap()).exp()).collect();
    if let Some(w) = zero_probabilities(fit, design)? {
        for (m, wi) in means.iter_mut().zip(w) {
            *m = *m * (F::one() - wi);
        }
    }
    Ok(means)
}

/// NB deviance residuals:
/// `d_i = sign(y - mu) sqrt(2 [y ln(y/mu) - (y + theta) ln((y+theta)/(mu+theta))])`
/// with the `y = 0` limit taken analytically (the first term vanishes).
///
/// All three fitted families are NB-family: `mu` is each fit's mean
/// prediction (fixed effects for the mixed model, the unconditional mean for
/// ZINB) and `theta` its fitted dispersion. The exact
/// sum-of-squares-equals-deviance identity holds for the plain NB fit; see
/// [`deviance`].
pub fn deviance_residuals<F: Float>(
    fit: &FitResult<F>,
    design: &DesignMatrix<F>,
) -> Result<Vec<F>> {
    let theta = fit.theta;
    let mus = predict_mean(fit, design)?;
    Ok(design
        .y
        .iter()
        .zip(&mus)
        .map(|(&y, &mu)| {
            let yf = F::cast(y as f64);
            let first = if y == 0 {
                F::zero()
            } else {
                yf * (yf / mu).ln()
            };
            let second = (yf + theta) * ((yf + theta) / (mu + theta)).ln();
            let inner = (F::cast(2.0) * (first - second)).max(F::zero());
            let sign = if yf >= mu { F::one() } else { -F::one() };
            sign * inner.sqrt()
        })
        .collect())
}

/// Model deviance `2 (LL_saturated - LL_model)`, with the saturated model
/// using `mu = max(y, 1e-10)` at the fitted dispersion. Equals the sum of
/// squared deviance residuals; that identity is exact for the plain NB
/// likelihood, so this is restricted to it.
pub fn deviance<F: Float>(fit: &FitResult<F>, design: &DesignMatrix<F>) -> Result<F> {
    if fit.family != Family::Nb {
        return Err(Error::Invalid(
            "model deviance is defined for plain NB fits".to_string(),
        ));
    }
    let residuals = deviance_residuals(fit, design)?;
    Ok(pairwise_sum(
        &residuals.iter().map(|&d| d * d).collect::<Vec<_>>(),
    ))
}

/// Per-observation log-likelihood contributions at the fitted parameters.
/// Not defined for GLMM-NB, whose marginal likelihood factorizes over
/// groups, not observations.
pub fn loglik_contributions<F: Float>(
    fit: &FitResult<F>,
    design: &DesignMatrix<F>,
) -> Result<Vec<F>> {
    match fit.family {
        Family::Nb => {
            check_names(&design.x_names, &fit.count_coefficients, "design")?;
            let lik = NbLik::new(&design.x, &design.y, &design.offset);
            let mut params = fit.count_estimates();
            params.push(fit.theta.ln());
            Ok(lik.loglik_terms(&params))
        }
        Family::Zinb => {
            check_names(&design.x_names, &fit.count_coefficients, "design")?;
            let z = design
                .z
                .as_ref()
                .ok_or_else(|| Error::Schema("design has no zero-part matrix".to_string()))?;
            check_names(&design.z_names, &fit.zero_coefficients, "zero-part design")?;
            let lik = ZinbLik::new(&design.x, z, &design.y, &design.offset);
            let mut params = fit.count_estimates();
            params.extend(fit.zero_estimates());
            params.push(fit.theta.ln());
            Ok(lik.loglik_terms(&params))
        }
        Family::GlmmNb => Err(Error::Invalid(
            "per-observation contributions are not defined for grouped marginal likelihoods"
                .to_string(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VuongResult<F> {
    /// Positive values favor model `a`.
    pub statistic: F,
    pub p_value: F,
}

/// Vuong's non-nested likelihood-ratio test (uncorrected variant):
/// `V = sqrt(n) * mean(m) / sd(m)` with `m_i = ln f_a(y_i) - ln f_b(y_i)`
/// and `sd` the maximum-likelihood (1/n) standard deviation.
pub fn vuong_test<F: Float>(
    fit_a: &FitResult<F>,
    design_a: &DesignMatrix<F>,
    fit_b: &FitResult<F>,
    design_b: &DesignMatrix<F>,
) -> Result<VuongResult<F>> {
    if design_a.y != design_b.y {
        return Err(Error::Data(
            "Vuong test requires both fits on the identical dataset".to_string(),
        ));
    }
    let la = loglik_contributions(fit_a, design_a)?;
    let lb = loglik_contributions(fit_b, design_b)?;
    let n = la.len();
    let m: Vec<F> = la.iter().zip(&lb).map(|(&a, &b)| a - b).collect();
    let nf = F::from_count(n);
    let mean = pairwise_sum(&m) / nf;
    let var = pairwise_sum(&m.iter().map(|&v| (v - mean) * (v - mean)).collect::<Vec<_>>()) / nf;
    let sd = var.sqrt();
    if !(sd > F::cast(1e-12) * (F::one() + mean.abs())) {
        return Err(Error::DegenerateComparison(format!(
            "per-observation contributions are (nearly) identical: sd = {sd:e}"
        )));
    }
    let statistic = nf.sqrt() * mean / sd;
    Ok(VuongResult {
        statistic,
        p_value: two_sided_p(statistic),
    })
}
