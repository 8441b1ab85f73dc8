//! Probability mass functions, moments, and seeded sampling for the count
//! families: Negative Binomial (with its Poisson limit) and zero-inflated
//! Negative Binomial.
//!
//! All pmf math runs in log space through `ln_gamma`; probabilities appear
//! only at the boundary via `exp`. The dispersion is stored as `theta`
//! (variance = mean * (1 + mean / theta)); `alpha = 1 / theta` is derived,
//! which keeps the Poisson limit at `theta -> inf` instead of at a parameter
//! underflow.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{pairwise_sum, Float, SampleFloat};
use crate::special::{ln_gamma, ln_gamma_ratio};

/// Hard cap on pmf truncation length.
pub const TAIL_K_CAP: u64 = 10_000;

/// Default tail-mass budget for truncated supports.
pub const DEFAULT_TAIL_BUDGET: f64 = 1e-9;

/// Negative Binomial parameters: mean and dispersion theta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbParams<F> {
    mean: F,
    theta: F,
}

impl<F: Float> NbParams<F> {
    pub fn new(mean: F, theta: F) -> Result<Self> {
        if !(mean > F::zero()) || !mean.is_finite() {
            return Err(Error::Domain(format!("NB mean must be positive, got {mean}")));
        }
        if !(theta > F::zero()) || !theta.is_finite() {
            return Err(Error::Domain(format!("NB theta must be positive, got {theta}")));
        }
        Ok(Self { mean, theta })
    }

    pub fn mean(&self) -> F {
        self.mean
    }

    pub fn theta(&self) -> F {
        self.theta
    }

    /// Overdispersion parameter `alpha = 1 / theta`.
    pub fn alpha(&self) -> F {
        self.theta.recip()
    }
}

/// Zero-inflated Negative Binomial parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZinbParams<F> {
    nb: NbParams<F>,
    zero_prob: F,
}

impl<F: Float> ZinbParams<F> {
    pub fn new(nb: NbParams<F>, zero_prob: F) -> Result<Self> {
        if !(zero_prob >= F::zero() && zero_prob <= F::one()) {
            return Err(Error::Domain(format!(
                "zero-inflation probability must lie in [0, 1], got {zero_prob}"
            )));
        }
        Ok(Self { nb, zero_prob })
    }

    pub fn nb(&self) -> NbParams<F> {
        self.nb
    }

    pub fn zero_prob(&self) -> F {
        self.zero_prob
    }
}

/// Log pmf of the Negative Binomial at count `k`:
/// `lgamma(k+theta) - lgamma(theta) - lgamma(k+1)
///  + theta ln(theta/(theta+mean)) + k ln(mean/(theta+mean))`.
pub fn nb_log_pmf<F: Float>(k: u64, p: &NbParams<F>) -> F {
    let theta = p.theta;
    let lambda = p.mean;
    let kf = F::cast(k as f64);
    // theta * ln(theta / (theta + lambda)) = -theta * ln1p(lambda / theta)
    let zero_term = -theta * (lambda / theta).ln_1p();
    if k == 0 {
        return zero_term;
    }
    ln_gamma_ratio(theta, k) - ln_gamma(kf + F::one()) + zero_term
        + kf * (lambda.ln() - (theta + lambda).ln())
}

/// Negative Binomial pmf.
pub fn nb_pmf<F: Float>(k: u64, p: &NbParams<F>) -> F {
    nb_log_pmf(k, p).exp()
}

/// Variance of the Negative Binomial: `mean * (1 + mean / theta)`.
pub fn nb_variance<F: Float>(p: &NbParams<F>) -> F {
    p.mean * (F::one() + p.mean / p.theta)
}

/// ZINB pmf: a point mass `w` at zero mixed with an NB component.
/// With `w = 0` this is bit-identical to the plain NB pmf.
pub fn zinb_pmf<F: Float>(k: u64, p: &ZinbParams<F>) -> F {
    let w = p.zero_prob;
    let nb = nb_pmf(k, &p.nb);
    if k == 0 {
        w + (F::one() - w) * nb
    } else {
        (F::one() - w) * nb
    }
}

/// One fitted count family, for code that handles either.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CountDist<F> {
    Nb(NbParams<F>),
    Zinb(ZinbParams<F>),
}

impl<F: Float> CountDist<F> {
    pub fn pmf(&self, k: u64) -> F {
        match self {
            CountDist::Nb(p) => nb_pmf(k, p),
            CountDist::Zinb(p) => zinb_pmf(k, p),
        }
    }

    /// Analytic mean: `lambda` for NB, `(1 - w) * lambda` for ZINB.
    pub fn mean(&self) -> F {
        match self {
            CountDist::Nb(p) => p.mean,
            CountDist::Zinb(p) => (F::one() - p.zero_prob) * p.nb.mean,
        }
    }

    fn nb_component(&self) -> NbParams<F> {
        match self {
            CountDist::Nb(p) => *p,
            CountDist::Zinb(p) => p.nb,
        }
    }

    /// Smallest `k_max` such that a geometric bound on the NB tail mass
    /// beyond `k_max` drops below `budget`, capped at [`TAIL_K_CAP`].
    ///
    /// The bound uses the pmf recurrence ratio
    /// `r(j) = (j + theta)/(j + 1) * lambda/(theta + lambda)`: past `k`,
    /// every ratio is at most `max(r(k+1), lambda/(theta+lambda))`, so the
    /// tail is dominated by a geometric series.
    pub fn tail_k_max(&self, budget: F) -> Result<u64> {
        let p = self.nb_component();
        let theta = p.theta;
        let lambda = p.mean;
        let ratio_limit = lambda / (theta + lambda);
        let ratio_at = |j: u64| -> F {
            let jf = F::cast(j as f64);
            (jf + theta) / (jf + F::one()) * ratio_limit
        };
        let mut pmf = nb_pmf(0, &p);
        let mut k = 0u64;
        loop {
            let next = pmf * ratio_at(k);
            let sup_ratio = ratio_at(k + 1).max(ratio_limit);
            if sup_ratio < F::one() {
                let bound = next / (F::one() - sup_ratio);
                if bound < budget {
                    return Ok(k);
                }
                if k >= TAIL_K_CAP {
                    return Err(Error::TailBudget {
                        k_max: k,
                        remaining: bound.to_f64_lossy(),
                    });
                }
            } else if k >= TAIL_K_CAP {
                return Err(Error::TailBudget {
                    k_max: k,
                    remaining: f64::NAN,
                });
            }
            pmf = next;
            k += 1;
        }
    }

    /// `sum_{k=0..k_max} k * pmf(k)`, checking the tail budget first.
    pub fn truncated_mean(&self, k_max: u64) -> Result<F> {
        let needed = self.tail_k_max(F::cast(DEFAULT_TAIL_BUDGET))?;
        if k_max < needed {
            let p = self.nb_component();
            let remaining = F::one()
                - pairwise_sum(
                    &(0..=k_max).map(|k| nb_pmf(k, &p)).collect::<Vec<_>>(),
                );
            return Err(Error::TailBudget {
                k_max,
                remaining: remaining.to_f64_lossy(),
            });
        }
        let terms: Vec<F> = (1..=k_max)
            .map(|k| F::cast(k as f64) * self.pmf(k))
            .collect();
        Ok(pairwise_sum(&terms))
    }

    /// The pmf evaluated on `0..=k_max` (raw, not renormalized).
    pub fn truncated_pmf(&self, k_max: u64) -> Vec<F> {
        (0..=k_max).map(|k| self.pmf(k)).collect()
    }

    /// Draws one count. NB draws use the gamma–Poisson mixture
    /// (rate = `lambda * G` with `G ~ Gamma(shape = theta, mean 1)`); ZINB
    /// gates the NB draw behind a Bernoulli(`w`) structural zero. The
    /// sequence is fully determined by the caller's RNG state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64
    where
        F: SampleFloat,
    {
        match self {
            CountDist::Nb(p) => sample_nb(p, rng),
            CountDist::Zinb(p) => {
                let u = F::sample_unit(rng);
                if u < p.zero_prob {
                    0
                } else {
                    sample_nb(&p.nb, rng)
                }
            }
        }
    }
}

fn sample_nb<F: SampleFloat, R: Rng + ?Sized>(p: &NbParams<F>, rng: &mut R) -> u64 {
    let g = F::sample_gamma(p.theta, p.theta.recip(), rng);
    F::sample_poisson(p.mean * g, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nb(mean: f64, theta: f64) -> NbParams<f64> {
        NbParams::new(mean, theta).unwrap()
    }

    fn zinb(mean: f64, theta: f64, w: f64) -> ZinbParams<f64> {
        ZinbParams::new(nb(mean, theta), w).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(NbParams::new(0.0, 1.0).is_err());
        assert!(NbParams::new(1.0, -1.0).is_err());
        assert!(NbParams::new(f64::NAN, 1.0).is_err());
        assert!(ZinbParams::new(nb(1.0, 1.0), 1.5).is_err());
        assert!(ZinbParams::new(nb(1.0, 1.0), -0.1).is_err());
        assert!((nb(2.0, 4.0).alpha() - 0.25).abs() < 1e-15);
    }

    // theta = 1 makes the NB geometric: P(k) = (theta/(theta+l)) * (l/(theta+l))^k.
    #[test]
    fn geometric_special_cases() {
        assert!((nb_pmf(0, &nb(0.5, 1.0)) - 2.0 / 3.0).abs() < 1e-15);
        assert!((nb_pmf(2, &nb(0.5, 1.0)) - 2.0 / 27.0).abs() < 1e-15);
    }

    // Reference value computed from the log-gamma form at 40 digits:
    // P(0; 0.5, 1.1068) = 0.6619378118372180.
    #[test]
    fn zero_probability_at_reported_dispersion() {
        let p = nb_pmf(0, &nb(0.5, 1.1068));
        assert!((p - 0.6619378118372180).abs() < 1e-13);
        assert!((p - 0.6619).abs() < 1e-4);
    }

    // More mpmath-checked spot values.
    #[test]
    fn pmf_spot_values() {
        assert!((nb_pmf(3, &nb(1.7, 0.9)) - 0.08892253262461113).abs() < 1e-15);
        assert!((nb_pmf(17, &nb(4.2, 2.5)) - 0.001777401492794653).abs() < 1e-16);
        assert!((nb_log_pmf(100, &nb(0.8, 1.2)) - -91.23445860392597).abs() < 1e-10);
    }

    #[test]
    fn variance_relation() {
        assert!((nb_variance(&nb(2.0, 1.0)) - 6.0).abs() < 1e-14);
        assert!((nb_variance(&nb(2.0, 1e12)) - 2.0).abs() < 1e-9);
        let v = nb_variance(&nb(0.5, 1.1068));
        assert!((v - 0.5 * (1.0 + 0.5 / 1.1068)).abs() < 1e-15);
        assert!((v - 0.7259).abs() < 1e-4);
    }

    #[test]
    fn zinb_mixture_values() {
        // Degenerate mixtures.
        for k in 0..20u64 {
            assert_eq!(zinb_pmf(k, &zinb(0.7, 1.3, 0.0)), nb_pmf(k, &nb(0.7, 1.3)));
        }
        assert_eq!(zinb_pmf(0, &zinb(1.0, 1.0, 1.0)), 1.0);
        assert_eq!(zinb_pmf(1, &zinb(1.0, 1.0, 1.0)), 0.0);
        // Hand arithmetic: 0.3 + 0.7 * (2/3).
        let p = zinb_pmf(0, &zinb(0.5, 1.0, 0.3));
        assert!((p - (0.3 + 0.7 * 2.0 / 3.0)).abs() < 1e-15);
        assert!((p - 0.7667).abs() < 1e-4);
    }

    #[test]
    fn truncated_means() {
        // All mass at zero.
        let d = CountDist::Zinb(zinb(1.0, 1.0, 1.0));
        let k = d.tail_k_max(1e-9).unwrap();
        assert_eq!(d.truncated_mean(k).unwrap(), 0.0);

        let d = CountDist::Nb(nb(0.5, 1.1068));
        assert!((d.truncated_mean(200).unwrap() - 0.5).abs() < 1e-6);

        let d = CountDist::Zinb(zinb(1.0, 2.0, 0.3));
        let k = d.tail_k_max(1e-9).unwrap();
        assert!((d.truncated_mean(k).unwrap() - 0.7).abs() < 1e-6);
    }

    #[test]
    fn truncated_mean_rejects_short_support() {
        let d = CountDist::Nb(nb(5.0, 1.0));
        match d.truncated_mean(3) {
            Err(Error::TailBudget { k_max, remaining }) => {
                assert_eq!(k_max, 3);
                assert!(remaining > 1e-9);
            }
            other => panic!("expected tail-budget error, got {other:?}"),
        }
    }

    #[test]
    fn normalization_within_tail_budget() {
        for &(mean, theta) in &[
            (0.1, 0.5),
            (0.5, 1.1068),
            (2.0, 1.0),
            (5.0, 0.2),
            (20.0, 3.0),
            (1.0, 1e10),
        ] {
            let d = CountDist::Nb(nb(mean, theta));
            let k_max = d.tail_k_max(1e-9).unwrap();
            let total = pairwise_sum(&d.truncated_pmf(k_max));
            assert!(
                total >= 1.0 - 1e-9 && total <= 1.0,
                "mean {mean} theta {theta}: total {total}"
            );
        }
    }

    #[test]
    fn recurrence_identity_to_machine_precision() {
        for &(mean, theta) in &[(0.5, 1.1068), (2.0, 0.3), (7.7, 4.1)] {
            let p = nb(mean, theta);
            for k in 0..=50u64 {
                let ratio = nb_pmf(k + 1, &p) / nb_pmf(k, &p);
                let expected = (k as f64 + theta) / (k as f64 + 1.0) * mean / (theta + mean);
                assert!(
                    (ratio / expected - 1.0).abs() < 1e-12,
                    "k={k} ratio {ratio} expected {expected}"
                );
            }
        }
    }

    #[test]
    fn poisson_limit() {
        for &lambda in &[0.1, 1.0, 5.0] {
            let p = nb(lambda, 1e10);
            let mut log_fact = 0.0f64;
            for k in 0..=30u64 {
                if k > 0 {
                    log_fact += (k as f64).ln();
                }
                let poisson = (-lambda + k as f64 * lambda.ln() - log_fact).exp();
                assert!(
                    (nb_pmf(k, &p) - poisson).abs() < 1e-6,
                    "lambda {lambda} k {k}"
                );
            }
        }
    }

    #[test]
    fn sampling_moments_match_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = CountDist::Nb(nb(2.0, 1.0));
        let n = 1_000_000usize;
        let draws: Vec<f64> = (0..n).map(|_| d.sample(&mut rng) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.01, "mean {mean}");
        assert!((var - 6.0).abs() < 0.1, "var {var}");

        // ZINB mixture mean (1-w) * lambda.
        let dz = CountDist::Zinb(zinb(1.5, 2.0, 0.4));
        let m = (0..200_000)
            .map(|_| dz.sample(&mut rng) as f64)
            .sum::<f64>()
            / 200_000.0;
        let se = (nb_variance(&nb(1.5, 2.0)) / 200_000.0).sqrt();
        assert!((m - 0.9).abs() < 3.0 * se + 0.01, "mixture mean {m}");
    }

    #[test]
    fn zinb_w_one_always_draws_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = CountDist::Zinb(zinb(5.0, 1.0, 1.0));
        assert!((0..1000).all(|_| d.sample(&mut rng) == 0));
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let d = CountDist::Zinb(zinb(2.0, 1.4, 0.25));
        let draw = |seed: u64| -> Vec<u64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..256).map(|_| d.sample(&mut rng)).collect()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Normalization holds across the parameter box the models live in.
        #[test]
        fn prop_normalization(
            mean in 1e-3f64..30.0,
            theta in 0.05f64..1e4,
            w in 0.0f64..1.0,
        ) {
            let d = CountDist::Zinb(zinb(mean, theta, w));
            let k_max = d.tail_k_max(1e-9).unwrap();
            let total = pairwise_sum(&d.truncated_pmf(k_max));
            prop_assert!(total >= 1.0 - 1e-9 && total <= 1.0 + 1e-12, "total {}", total);
        }

        // Truncated mean approximates the analytic mixture mean.
        #[test]
        fn prop_truncated_mean(
            mean in 0.01f64..20.0,
            theta in 0.1f64..100.0,
            w in 0.0f64..0.95,
        ) {
            let d = CountDist::Zinb(zinb(mean, theta, w));
            let k_max = d.tail_k_max(1e-9).unwrap();
            let m = d.truncated_mean(k_max).unwrap();
            prop_assert!((m - (1.0 - w) * mean).abs() < 1e-5 * (1.0 + mean));
        }
    }
}
