//! Scalar abstraction for the numeric core.
//!
//! Everything numerical in this crate is generic over [`Float`], which is
//! `f32` or `f64`. The crate root exports `f64` aliases for the common types;
//! `f32` remains available for callers that can live with its precision.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

/// Floating-point scalar used by the numeric core.
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssignOps
    + core::iter::Sum<Self>
    + core::fmt::Debug
    + core::fmt::Display
    + core::fmt::LowerExp
    + serde::Serialize
    + serde::de::DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal or intermediate into `Self`.
    fn cast(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any Float")
    }

    /// Converts a count or index into `Self`.
    fn from_count(value: usize) -> Self {
        Self::from_usize(value).expect("usize converts to any Float")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("Float converts to f64")
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// A [`Float`] the random samplers can produce. The methods wrap
/// `rand_distr`, keeping its trait bounds out of generic signatures.
pub trait SampleFloat: Float {
    /// Uniform draw on [0, 1).
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Standard normal draw.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Gamma draw with the given shape and scale.
    fn sample_gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Self;

    /// Poisson count draw at the given rate (`rate >= 0`).
    fn sample_poisson<R: Rng + ?Sized>(rate: Self, rng: &mut R) -> u64;
}

macro_rules! impl_sample_float {
    ($t:ty) => {
        impl SampleFloat for $t {
            fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random()
            }

            fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.sample(rand_distr::StandardNormal)
            }

            fn sample_gamma<R: Rng + ?Sized>(shape: Self, scale: Self, rng: &mut R) -> Self {
                Gamma::new(shape, scale)
                    .expect("positive gamma parameters")
                    .sample(rng)
            }

            fn sample_poisson<R: Rng + ?Sized>(rate: Self, rng: &mut R) -> u64 {
                if rate <= 0.0 {
                    return 0;
                }
                let draw: $t = Poisson::new(rate).expect("positive Poisson rate").sample(rng);
                draw as u64
            }
        }
    };
}

impl_sample_float!(f32);
impl_sample_float!(f64);

/// Pairwise summation: a fixed, order-independent reduction whose rounding
/// error grows with log(n) rather than n.
pub fn pairwise_sum<F: Float>(values: &[F]) -> F {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut acc = F::zero();
        for &v in values {
            acc += v;
        }
        acc
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_sequential_on_small_inputs() {
        let xs: Vec<f64> = (1..=7).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 28.0);
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
    }

    #[test]
    fn pairwise_sum_is_accurate_on_long_alternating_series() {
        let xs: Vec<f64> = (0..100_000)
            .map(|i| if i % 2 == 0 { 1.0 + 1e-12 } else { -1.0 })
            .collect();
        let expected = 50_000.0 * 1e-12;
        assert!((pairwise_sum(&xs) - expected).abs() < 1e-9);
    }

    #[test]
    fn casts_round_trip() {
        assert_eq!(<f64 as Float>::cast(1.5), 1.5);
        assert_eq!(<f32 as Float>::from_count(3), 3.0f32);
    }
}
