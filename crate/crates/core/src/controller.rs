//! Synchronizing control: align the robot's local velocity with the
//! guidance vector `−∇V`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::ControlError;
use crate::robot::{self, ControlVector, LocalVelocity, ModelKind, RobotParams, RobotState};
use crate::Vec2;

/// Guidance vectors shorter than this are treated as zero (the target node).
pub const ZERO_GUIDANCE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainSet {
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "KD1")]
    pub kd1: f64,
    #[serde(rename = "KD2")]
    pub kd2: f64,
}

impl Default for GainSet {
    fn default() -> Self {
        GainSet {
            k1: 1.0,
            k2: 4.0,
            kd1: 2.0,
            kd2: 2.0,
        }
    }
}

impl GainSet {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k1.is_finite() && self.k1 > 0.0 && self.k2.is_finite() && self.k2 > 0.0) {
            return Err("controller gains K1 and K2 must be positive".into());
        }
        if !(self.kd1.is_finite() && self.kd1 >= 0.0 && self.kd2.is_finite() && self.kd2 >= 0.0) {
            return Err("damping gains KD1 and KD2 must be non-negative".into());
        }
        Ok(())
    }

    /// Damping condition `KD1 > K1`, `KD2 > 0` under which the dynamic
    /// closed loop has a non-increasing Lyapunov function.
    pub fn damping_dominates(&self) -> bool {
        self.kd1 > self.k1 && self.kd2 > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DampingMode {
    Omni,
    #[default]
    Selective,
}

/// `(s1, s2)`: tangential and angular channels in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SyncSignal {
    pub s1: f64,
    pub s2: f64,
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// `Δθ = arg(guidance) − θ`, wrapped to `(−π, π]`.
pub fn heading_error(guidance: Vec2, theta: f64) -> Result<f64, ControlError> {
    if guidance.norm() < ZERO_GUIDANCE {
        return Err(ControlError::ZeroGuidance);
    }
    Ok(wrap_angle(guidance.y.atan2(guidance.x) - theta))
}

/// `s1 = K1 |g| cos Δθ`, `s2 = K2 Δθ`.
pub fn sync_kinematic(guidance: Vec2, theta: f64, g: &GainSet) -> Result<SyncSignal, ControlError> {
    let dth = heading_error(guidance, theta)?;
    Ok(SyncSignal {
        s1: g.k1 * guidance.norm() * dth.cos(),
        s2: g.k2 * dth,
    })
}

/// Actuator command realizing the local velocity `(s1, s2)`.
///
/// A front-steered robot cannot turn in place, so its turn rate takes
/// priority over the tangential speed (see [`robot::fsr_turn_priority`]);
/// otherwise `|Δθ| = π/2` would be a dead stop.
pub fn control_kinematic(sig: SyncSignal, kind: ModelKind, p: &RobotParams) -> ControlVector {
    let lam = LocalVelocity {
        v: sig.s1,
        omega: sig.s2,
    };
    match kind {
        ModelKind::FsrKinematic => robot::fsr_actuation_inverse(robot::fsr_turn_priority(lam, p), p),
        ModelKind::DdrKinematic | ModelKind::DdrDynamic => robot::ddr_actuation_inverse(lam, p),
    }
}

/// `s1 = K1 (|g| − v) cos Δθ`, `s2 = K2 Δθ`.
pub fn sync_dynamic(guidance: Vec2, v: f64, theta: f64, g: &GainSet) -> Result<SyncSignal, ControlError> {
    let dth = heading_error(guidance, theta)?;
    Ok(SyncSignal {
        s1: g.k1 * (guidance.norm() - v) * dth.cos(),
        s2: g.k2 * dth,
    })
}

/// `(KD1 η1 v, KD2 η2 ω)`; selective damping drops the tangential part
/// while the robot is headed along the guidance.
pub fn damping_force(guidance: Vec2, state: &RobotState, g: &GainSet, mode: DampingMode) -> SyncSignal {
    let eta1 = match mode {
        DampingMode::Omni => 1.0,
        DampingMode::Selective => heading_error(guidance, state.theta).map_or(1.0, |d| 1.0 - d.cos()),
    };
    SyncSignal {
        s1: g.kd1 * eta1 * state.v,
        s2: g.kd2 * state.omega,
    }
}

/// Wheel torques for the local acceleration `S − S_d`.
pub fn control_dynamic(sync: SyncSignal, damp: SyncSignal, p: &RobotParams) -> ControlVector {
    robot::ddr_dynamic_inverse(sync.s1 - damp.s1, sync.s2 - damp.s2, p)
}

/// Gains, damping mode and the robot parameters the controller believes in
/// (which may differ from the plant's).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub gains: GainSet,
    pub damping: DampingMode,
    pub params: RobotParams,
}

impl Controller {
    /// Synchronizing signal and actuator command for `state` under `guidance`.
    /// Zero guidance gives a zero synchronizing signal.
    pub fn command(&self, kind: ModelKind, guidance: Vec2, state: &RobotState) -> (SyncSignal, ControlVector) {
        if kind.is_dynamic() {
            let sync = sync_dynamic(guidance, state.v, state.theta, &self.gains).unwrap_or_default();
            let damp = damping_force(guidance, state, &self.gains, self.damping);
            (sync, control_dynamic(sync, damp, &self.params))
        } else {
            let sync = sync_kinematic(guidance, state.theta, &self.gains).unwrap_or_default();
            (sync, control_kinematic(sync, kind, &self.params))
        }
    }
}
