//! Count-data rate models for road-safety analysis: Negative Binomial,
//! zero-inflated NB, and random-intercept mixed NB fits by maximum
//! likelihood, plus binned calibration diagnostics with a weighted pseudo-R².
//!
//! The numeric core is generic over the scalar type (see [`num::Float`]);
//! `f64` aliases for the main types live at the crate root.

pub mod data;
pub mod distributions;
pub mod error;
pub mod estimation;
pub mod gof;
pub mod linalg;
pub mod num;
pub mod optim;
pub mod quadrature;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
pub use num::{Float, SampleFloat};

/// `f64` instantiations of the parameter types.
pub type NbParams64 = distributions::NbParams<f64>;
pub type ZinbParams64 = distributions::ZinbParams<f64>;
pub type CountDist64 = distributions::CountDist<f64>;
pub type DesignMatrix64 = data::DesignMatrix<f64>;
pub type FitResult64 = estimation::FitResult<f64>;
pub type OptimizerConfig64 = estimation::OptimizerConfig<f64>;
pub type GofConfig64 = gof::GofConfig<f64>;
pub type GofReport64 = gof::GofReport<f64>;
