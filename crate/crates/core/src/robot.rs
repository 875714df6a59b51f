//! Separable robot models: an actuation stage `λ = Q(U)` mapping controls to
//! local velocities, followed by the transformation `Ṗ = F(P) λ` to the
//! global frame.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::RobotError;
use crate::Vec2;

/// Below this forward speed the steering angle of a front-steered robot is
/// not determined by the commanded turn rate; it is parked at the limit.
pub const V_DEAD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DdrKinematic,
    FsrKinematic,
    DdrDynamic,
}

impl ModelKind {
    pub fn is_dynamic(self) -> bool {
        self == ModelKind::DdrDynamic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotParams {
    /// Wheel radius.
    pub r: f64,
    /// Distance between the drive wheels.
    #[serde(rename = "W")]
    pub w: f64,
    /// Wheelbase, steering axle to drive axle.
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "I")]
    pub i: f64,
    pub phi_max: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            r: 1.0,
            w: 1.0,
            l: 1.0,
            m: 1.0,
            i: 1.0,
            phi_max: 1.4,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("r", self.r), ("W", self.w), ("L", self.l), ("M", self.m), ("I", self.i)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("robot.{name} must be positive"));
            }
        }
        if !(self.phi_max > 0.0 && self.phi_max < std::f64::consts::FRAC_PI_2) {
            return Err("robot.phi_max must lie in (0, π/2)".into());
        }
        Ok(())
    }
}

/// Global pose and local velocity. `theta` is kept unwrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    #[serde(default)]
    pub v: f64,
    #[serde(default)]
    pub omega: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        RobotState {
            x,
            y,
            theta,
            v: 0.0,
            omega: 0.0,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn local_velocity(&self) -> LocalVelocity {
        LocalVelocity {
            v: self.v,
            omega: self.omega,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.theta, self.v, self.omega]
            .iter()
            .all(|c| c.is_finite())
    }
}

/// Tangential and angular speed in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalVelocity {
    pub v: f64,
    pub omega: f64,
}

/// `(v̇, ω̇)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalAcceleration {
    pub v_dot: f64,
    pub omega_dot: f64,
}

/// `(ẋ, ẏ, θ̇)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseRate {
    pub x_dot: f64,
    pub y_dot: f64,
    pub theta_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlVector {
    /// Right and left wheel speeds, rad/s.
    DdrKinematic { omega_r: f64, omega_l: f64 },
    /// Drive wheel speed (rad/s) and steering angle (rad).
    FsrKinematic { omega_h: f64, phi: f64 },
    /// Right and left wheel torques, N·m.
    DdrDynamic { torque_r: f64, torque_l: f64 },
}

impl ControlVector {
    pub fn channels(&self) -> [f64; 2] {
        match *self {
            ControlVector::DdrKinematic { omega_r, omega_l } => [omega_r, omega_l],
            ControlVector::FsrKinematic { omega_h, phi } => [omega_h, phi],
            ControlVector::DdrDynamic { torque_r, torque_l } => [torque_r, torque_l],
        }
    }

    /// Same variant with new channel values.
    pub fn with_channels(&self, c: [f64; 2]) -> ControlVector {
        match self {
            ControlVector::DdrKinematic { .. } => ControlVector::DdrKinematic {
                omega_r: c[0],
                omega_l: c[1],
            },
            ControlVector::FsrKinematic { .. } => ControlVector::FsrKinematic { omega_h: c[0], phi: c[1] },
            ControlVector::DdrDynamic { .. } => ControlVector::DdrDynamic {
                torque_r: c[0],
                torque_l: c[1],
            },
        }
    }

    pub fn zero(kind: ModelKind) -> ControlVector {
        let z = ControlVector::DdrKinematic {
            omega_r: 0.0,
            omega_l: 0.0,
        };
        match kind {
            ModelKind::DdrKinematic => z,
            ModelKind::FsrKinematic => ControlVector::FsrKinematic { omega_h: 0.0, phi: 0.0 },
            ModelKind::DdrDynamic => ControlVector::DdrDynamic {
                torque_r: 0.0,
                torque_l: 0.0,
            },
        }
    }
}

/// `F(P) λ`: local velocity expressed in the global frame.
pub fn transform(theta: f64, lam: LocalVelocity) -> PoseRate {
    PoseRate {
        x_dot: lam.v * theta.cos(),
        y_dot: lam.v * theta.sin(),
        theta_dot: lam.omega,
    }
}

/// Matrix `A` with `(v, ω)ᵀ = A (ω_R, ω_L)ᵀ`.
pub fn ddr_actuation_matrix(p: &RobotParams) -> Matrix2<f64> {
    Matrix2::new(p.r / 2.0, p.r / 2.0, p.r / p.w, -p.r / p.w)
}

pub fn ddr_actuation(omega_r: f64, omega_l: f64, p: &RobotParams) -> LocalVelocity {
    LocalVelocity {
        v: p.r * (omega_r + omega_l) / 2.0,
        omega: p.r * (omega_r - omega_l) / p.w,
    }
}

pub fn ddr_forward_kinematic(theta: f64, omega_r: f64, omega_l: f64, p: &RobotParams) -> PoseRate {
    transform(theta, ddr_actuation(omega_r, omega_l, p))
}

pub fn ddr_actuation_inverse(lam: LocalVelocity, p: &RobotParams) -> ControlVector {
    let a = lam.v / p.r;
    let b = p.w * lam.omega / (2.0 * p.r);
    ControlVector::DdrKinematic {
        omega_r: a + b,
        omega_l: a - b,
    }
}

pub fn fsr_actuation(omega_h: f64, phi: f64, p: &RobotParams) -> Result<LocalVelocity, RobotError> {
    if !(phi.abs() <= p.phi_max) {
        return Err(RobotError::SteeringOutOfRange { phi, limit: p.phi_max });
    }
    let v = p.r * omega_h;
    Ok(LocalVelocity {
        v,
        omega: v * phi.tan() / p.l,
    })
}

pub fn fsr_forward_kinematic(theta: f64, omega_h: f64, phi: f64, p: &RobotParams) -> Result<PoseRate, RobotError> {
    fsr_actuation(omega_h, phi, p).map(|lam| transform(theta, lam))
}

/// `ω_h = v/r`, `φ = atan(ωL/v)` clamped to the steering limit.
///
/// The single-argument arctangent keeps `φ` in `(-π/2, π/2)` so reversing
/// (`v < 0`) still turns the requested way.
pub fn fsr_actuation_inverse(lam: LocalVelocity, p: &RobotParams) -> ControlVector {
    let phi = if lam.v.abs() < V_DEAD {
        if lam.omega == 0.0 {
            0.0
        } else {
            p.phi_max.copysign(lam.omega)
        }
    } else {
        (lam.omega * p.l / lam.v).atan().clamp(-p.phi_max, p.phi_max)
    };
    ControlVector::FsrKinematic {
        omega_h: lam.v / p.r,
        phi,
    }
}

/// Smallest change to `lam` that a front-steered robot can realize exactly:
/// when the turn rate would need more than `phi_max` of steering, the
/// forward speed is raised (forward when stopped) to the full-lock value.
pub fn fsr_turn_priority(lam: LocalVelocity, p: &RobotParams) -> LocalVelocity {
    let v_min = lam.omega.abs() * p.l / p.phi_max.tan();
    if lam.v.abs() >= v_min {
        return lam;
    }
    let dir = if lam.v < 0.0 { -1.0 } else { 1.0 };
    LocalVelocity {
        v: dir * v_min,
        omega: lam.omega,
    }
}

/// Rigid-body differential drive: returns the pose rate at the current local
/// velocity and the local acceleration produced by the wheel torques.
pub fn ddr_forward_dynamic(s: &RobotState, torque_r: f64, torque_l: f64, p: &RobotParams) -> (PoseRate, LocalAcceleration) {
    (
        transform(s.theta, s.local_velocity()),
        LocalAcceleration {
            v_dot: (torque_r + torque_l) / (p.m * p.r),
            omega_dot: p.w * (torque_r - torque_l) / (2.0 * p.i * p.r),
        },
    )
}

/// Wheel torques producing the local acceleration `(a, α)`.
pub fn ddr_dynamic_inverse(a: f64, alpha: f64, p: &RobotParams) -> ControlVector {
    let lin = p.m * p.r * a;
    let rot = 2.0 * p.i * p.r * alpha / p.w;
    ControlVector::DdrDynamic {
        torque_r: (lin + rot) / 2.0,
        torque_l: (lin - rot) / 2.0,
    }
}

/// Wheel speeds for a local velocity, used for actuator power bookkeeping.
pub fn ddr_wheel_speeds(lam: LocalVelocity, p: &RobotParams) -> (f64, f64) {
    match ddr_actuation_inverse(lam, p) {
        ControlVector::DdrKinematic { omega_r, omega_l } => (omega_r, omega_l),
        _ => unreachable!(),
    }
}

/// Local velocity produced by a kinematic control.
pub fn kinematic_velocity(u: &ControlVector, p: &RobotParams) -> Result<LocalVelocity, RobotError> {
    match *u {
        ControlVector::DdrKinematic { omega_r, omega_l } => Ok(ddr_actuation(omega_r, omega_l, p)),
        ControlVector::FsrKinematic { omega_h, phi } => fsr_actuation(omega_h, phi, p),
        ControlVector::DdrDynamic { .. } => Err(RobotError::ControlMismatch),
    }
}
