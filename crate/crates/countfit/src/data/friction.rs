//! Side-friction-demand synthesis from curve geometry.
//!
//! US customary units throughout: speeds in ft/s, radii in feet,
//! superelevation in ft/ft. Callers with mph speeds convert first via
//! [`mph_to_fps`] — mixing the two silently is a 1.47x error.

use crate::error::{Error, Result};
use crate::num::Float;

/// Standard gravity, ft/s².
pub const GRAVITY_FT_S2: f64 = 32.174;

/// Arc-definition constant: R (ft) = 5729.58 / D (degrees).
const ARC_DEFINITION_FT: f64 = 5729.58;

pub fn mph_to_fps<F: Float>(mph: F) -> F {
    mph * F::cast(5280.0 / 3600.0)
}

/// Radius in feet for a curvature given in degrees (arc definition).
/// Zero curvature is a tangent: no radius.
pub fn curvature_to_radius_ft<F: Float>(degrees: F) -> Option<F> {
    if degrees == F::zero() {
        None
    } else {
        Some(F::cast(ARC_DEFINITION_FT) / degrees.abs())
    }
}

/// Side friction demand `v^2 / (g R) - e`.
pub fn side_friction_demand<F: Float>(speed_fps: F, radius_ft: F, superelevation: F) -> Result<F> {
    if !(radius_ft > F::zero()) {
        return Err(Error::Domain(format!(
            "radius must be positive, got {radius_ft} (tangents have no friction demand)"
        )));
    }
    if speed_fps < F::zero() {
        return Err(Error::Domain(format!("speed must be non-negative, got {speed_fps}")));
    }
    Ok(speed_fps * speed_fps / (F::cast(GRAVITY_FT_S2) * radius_ft) - superelevation)
}

/// Friction demand from curvature in degrees, with the tangent convention:
/// zero curvature means zero demand.
pub fn side_friction_from_curvature<F: Float>(
    speed_fps: F,
    curvature_deg: F,
    superelevation: F,
) -> Result<F> {
    match curvature_to_radius_ft(curvature_deg) {
        None => Ok(F::zero()),
        Some(radius) => side_friction_demand(speed_fps, radius, superelevation),
    }
}
