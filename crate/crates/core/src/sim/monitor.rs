//! Lyapunov monitoring of the closed loop.

use crate::controller::{heading_error, GainSet};
use crate::robot::{ModelKind, RobotParams, RobotState};
use crate::solver::PotentialField;

/// Coefficients of `Ξ = a·V + ½b·Δθ² + ½I·ω² + ½M·v²`.
///
/// Kinematic models use `a = b = 1` and no kinetic terms; the dynamic model
/// uses `a = K1·M`, `b = K2·I` and the plant's mass and inertia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovWeights {
    pub potential: f64,
    pub heading: f64,
    pub mass: f64,
    pub inertia: f64,
}

impl LyapunovWeights {
    pub fn new(kind: ModelKind, plant: &RobotParams, gains: &GainSet) -> Self {
        if kind.is_dynamic() {
            LyapunovWeights {
                potential: gains.k1 * plant.m,
                heading: gains.k2 * plant.i,
                mass: plant.m,
                inertia: plant.i,
            }
        } else {
            LyapunovWeights {
                potential: 1.0,
                heading: 1.0,
                mass: 0.0,
                inertia: 0.0,
            }
        }
    }
}

/// Ξ at `state` with heading error `dtheta`; `None` outside admissible space.
pub fn lyapunov(field: &PotentialField, state: &RobotState, dtheta: f64, w: &LyapunovWeights) -> Option<f64> {
    let v = field.potential_at(state.position())?;
    Some(
        w.potential * v
            + 0.5 * w.heading * dtheta * dtheta
            + 0.5 * w.inertia * state.omega * state.omega
            + 0.5 * w.mass * state.v * state.v,
    )
}

/// Ξ for each state; heading errors are taken against the field's guidance
/// (zero where it vanishes). Inadmissible states give `NaN`.
pub fn lyapunov_trace(field: &PotentialField, states: &[RobotState], w: &LyapunovWeights) -> Vec<f64> {
    states
        .iter()
        .map(|s| {
            let Ok(g) = field.gradient_at(s.position()) else {
                return f64::NAN;
            };
            let dth = heading_error(g, s.theta).unwrap_or(0.0);
            lyapunov(field, s, dth, w).unwrap_or(f64::NAN)
        })
        .collect()
}
