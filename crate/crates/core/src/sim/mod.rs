//! Closed-loop simulation: field → controller → disturbance → robot.

mod monitor;
mod path;

use serde::{Deserialize, Serialize};

pub use monitor::{lyapunov, lyapunov_trace, LyapunovWeights};
pub use path::{deviation_trace, reference_path, PolylineIndex, ReferencePath};

use crate::controller::{heading_error, Controller, SyncSignal};
use crate::error::SimError;
use crate::rng::SplitMix64;
use crate::robot::{self, ControlVector, ModelKind, RobotParams, RobotState};
use crate::solver::PotentialField;
use crate::Vec2;

/// Any state component beyond this magnitude ends the run.
pub const BLOWUP: f64 = 1e9;

/// Largest per-step rise of the Lyapunov function still counted as
/// non-increasing.
pub const LYAPUNOV_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub integrator: Integrator,
    pub seed: u64,
    /// Convergence radius around the target.
    pub pos_tol: f64,
    pub stop_on_converge: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            t_max: 60.0,
            integrator: Integrator::Rk4,
            seed: 0,
            pos_tol: 0.05,
            stop_on_converge: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err("sim.dt must be positive".into());
        }
        if !(self.t_max.is_finite() && self.t_max >= self.dt) {
            return Err("sim.t_max must be at least sim.dt".into());
        }
        if !(self.pos_tol.is_finite() && self.pos_tol > 0.0) {
            return Err("sim.pos_tol must be positive".into());
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_max / self.dt * (1.0 + 1e-12)).floor() as usize
    }
}

/// Actuator noise and saturation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Disturbance {
    /// Half-width of the uniform noise added to each channel.
    pub noise_amplitude: f64,
    /// Absolute clamp on each channel.
    pub saturation_limit: Option<f64>,
    /// Clamp as a fraction of the largest channel magnitude of the
    /// undisturbed run.
    pub saturation_fraction: Option<f64>,
}

impl Disturbance {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.noise_amplitude.is_finite() && self.noise_amplitude >= 0.0) {
            return Err("disturbance.noise_amplitude must be non-negative".into());
        }
        match (self.saturation_limit, self.saturation_fraction) {
            (Some(_), Some(_)) => Err("set at most one of saturation_limit and saturation_fraction".into()),
            (Some(l), None) if !(l.is_finite() && l >= 0.0) => {
                Err("disturbance.saturation_limit must be non-negative".into())
            }
            (None, Some(c)) if !(c > 0.0 && c <= 1.0) => Err("disturbance.saturation_fraction must lie in (0, 1]".into()),
            _ => Ok(()),
        }
    }

    pub fn is_none(&self) -> bool {
        self.noise_amplitude == 0.0 && self.saturation_limit.is_none() && self.saturation_fraction.is_none()
    }
}

/// Adds per-channel uniform noise in `[−a, a)` (channel order, two draws)
/// and clamps to the active saturation bound. `reference_max` is the
/// largest channel magnitude of the undisturbed run and is required with
/// fractional saturation.
pub fn apply_disturbance(
    u: &ControlVector,
    d: &Disturbance,
    reference_max: Option<f64>,
    rng: &mut SplitMix64,
) -> Result<ControlVector, SimError> {
    let bound = match (d.saturation_limit, d.saturation_fraction) {
        (Some(l), _) => Some(l),
        (None, Some(c)) => Some(c * reference_max.ok_or(SimError::MissingReferenceMax)?),
        (None, None) => None,
    };
    let mut ch = u.channels();
    if d.noise_amplitude > 0.0 {
        for c in ch.iter_mut() {
            *c += rng.symmetric(d.noise_amplitude);
        }
    }
    if let Some(b) = bound {
        for c in ch.iter_mut() {
            *c = c.clamp(-b, b);
        }
    }
    Ok(u.with_channels(ch))
}

/// The physical robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plant {
    pub kind: ModelKind,
    pub params: RobotParams,
}

impl Plant {
    /// For kinematic models: the local velocity the applied control produces.
    /// Steering beyond the mechanical limit is stopped at the limit.
    fn kinematic_state(&self, state: &RobotState, applied: &ControlVector) -> RobotState {
        let u = match *applied {
            ControlVector::FsrKinematic { omega_h, phi } => ControlVector::FsrKinematic {
                omega_h,
                phi: phi.clamp(-self.params.phi_max, self.params.phi_max),
            },
            u => u,
        };
        let lam = robot::kinematic_velocity(&u, &self.params).unwrap_or_default();
        RobotState {
            v: lam.v,
            omega: lam.omega,
            ..*state
        }
    }

    /// `d/dt (x, y, θ, v, ω, W)` under a held control, `W` the actuator work.
    fn derivative(&self, s: &[f64; 6], u: &ControlVector) -> [f64; 6] {
        let st = RobotState {
            x: s[0],
            y: s[1],
            theta: s[2],
            v: s[3],
            omega: s[4],
        };
        match *u {
            ControlVector::DdrDynamic { torque_r, torque_l } => {
                let (rate, acc) = robot::ddr_forward_dynamic(&st, torque_r, torque_l, &self.params);
                let (wr, wl) = robot::ddr_wheel_speeds(st.local_velocity(), &self.params);
                [
                    rate.x_dot,
                    rate.y_dot,
                    rate.theta_dot,
                    acc.v_dot,
                    acc.omega_dot,
                    torque_r * wr + torque_l * wl,
                ]
            }
            _ => {
                let rate = robot::transform(st.theta, st.local_velocity());
                [rate.x_dot, rate.y_dot, rate.theta_dot, 0.0, 0.0, 0.0]
            }
        }
    }

    /// Advances `state` by `dt` with `u` held constant; returns the new state
    /// and the actuator work done over the step.
    pub fn integrate(&self, state: &RobotState, u: &ControlVector, dt: f64, integrator: Integrator) -> (RobotState, f64) {
        let s0 = [state.x, state.y, state.theta, state.v, state.omega, 0.0];
        let f = |s: &[f64; 6]| self.derivative(s, u);
        let axpy = |s: &[f64; 6], k: &[f64; 6], h: f64| std::array::from_fn::<f64, 6, _>(|i| s[i] + h * k[i]);
        let s1 = match integrator {
            Integrator::Euler => axpy(&s0, &f(&s0), dt),
            Integrator::Rk4 => {
                let k1 = f(&s0);
                let k2 = f(&axpy(&s0, &k1, dt / 2.0));
                let k3 = f(&axpy(&s0, &k2, dt / 2.0));
                let k4 = f(&axpy(&s0, &k3, dt));
                std::array::from_fn(|i| s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            }
        };
        (
            RobotState {
                x: s1[0],
                y: s1[1],
                theta: s1[2],
                v: s1[3],
                omega: s1[4],
            },
            s1[5],
        )
    }
}

/// Noise generator plus the resolved saturation reference.
#[derive(Debug, Clone)]
pub struct DisturbanceSource {
    pub spec: Disturbance,
    pub reference_max: Option<f64>,
    pub rng: SplitMix64,
}

impl DisturbanceSource {
    pub fn new(spec: Disturbance, reference_max: Option<f64>, seed: u64) -> Self {
        DisturbanceSource {
            spec,
            reference_max,
            rng: SplitMix64::new(seed),
        }
    }
}

/// Everything computed in one closed-loop step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// State at the start of the step; kinematic models carry the velocity
    /// produced by the applied control.
    pub current: RobotState,
    pub next: RobotState,
    pub guidance: Vec2,
    pub sync: SyncSignal,
    pub command: ControlVector,
    pub applied: ControlVector,
    pub work: f64,
}

/// One closed-loop step under zero-order hold.
pub fn step(
    state: &RobotState,
    field: &PotentialField,
    controller: &Controller,
    plant: &Plant,
    disturbance: &mut DisturbanceSource,
    dt: f64,
    integrator: Integrator,
) -> Result<StepOutcome, SimError> {
    let guidance = field.gradient_at(state.position())?;
    let (sync, command) = controller.command(plant.kind, guidance, state);
    let applied = apply_disturbance(&command, &disturbance.spec, disturbance.reference_max, &mut disturbance.rng)?;
    let current = if plant.kind.is_dynamic() {
        *state
    } else {
        plant.kinematic_state(state, &applied)
    };
    let (next, work) = plant.integrate(&current, &applied, dt, integrator);
    if !next.is_finite() || [next.x, next.y, next.v, next.omega, next.theta].iter().any(|c| c.abs() > BLOWUP) {
        return Err(SimError::NumericalBlowup);
    }
    if !field.workspace().is_admissible(next.position()) {
        return Err(SimError::LeftAdmissibleSpace { x: next.x, y: next.y });
    }
    Ok(StepOutcome {
        current,
        next,
        guidance,
        sync,
        command,
        applied,
        work,
    })
}

/// One recorded sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: RobotState,
    pub command: [f64; 2],
    pub applied: [f64; 2],
    pub grad_mag: f64,
    /// Wrapped heading error; 0 where the guidance vanishes.
    pub dtheta: f64,
    pub delta: f64,
    pub lyapunov: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn positions(&self) -> Vec<Vec2> {
        self.samples.iter().map(|s| s.state.position()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Converged,
    TimeLimit,
    Collision,
    Blowup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub converged: bool,
    /// Time from which the robot stays within `pos_tol` of the target.
    pub convergence_time: Option<f64>,
    pub max_deviation: f64,
    pub final_pose: Pose,
    pub lyapunov_monotone: bool,
    pub lyapunov_max_increase: f64,
    pub min_clearance: f64,
    pub diverged: bool,
    pub end_reason: EndReason,
    pub collided: bool,
    pub duration: f64,
    pub steps: usize,
    pub path_length: f64,
    pub reference_length: f64,
    pub reference_reached_target: bool,
    /// Largest guidance magnitude along the reference path.
    pub guidance_max_on_reference: f64,
    pub initial_heading_error: f64,
    /// Largest magnitude of any commanded channel.
    pub max_command: f64,
    /// Actuator work minus kinetic energy change (dynamic model).
    pub energy_residual: f64,
}

/// A fully specified closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoop {
    pub plant: Plant,
    pub controller: Controller,
    pub disturbance: Disturbance,
    pub config: SimConfig,
    pub initial: RobotState,
}

impl ClosedLoop {
    pub fn lyapunov_weights(&self) -> LyapunovWeights {
        LyapunovWeights::new(self.plant.kind, &self.plant.params, &self.controller.gains)
    }

    /// Runs the loop. With fractional saturation an undisturbed pre-run
    /// supplies the reference maximum.
    pub fn run(&self, field: &PotentialField) -> Result<(Trajectory, Metrics), SimError> {
        let reference_max = match self.disturbance.saturation_fraction {
            Some(_) => {
                let clean = ClosedLoop {
                    disturbance: Disturbance::default(),
                    ..*self
                };
                Some(clean.run(field)?.1.max_command)
            }
            None => None,
        };
        self.run_with_reference(field, reference_max)
    }

    pub fn run_with_reference(
        &self,
        field: &PotentialField,
        reference_max: Option<f64>,
    ) -> Result<(Trajectory, Metrics), SimError> {
        let cfg = &self.config;
        let reference = reference_path(field, self.initial.position(), cfg)?;
        let index = PolylineIndex::new(&reference.points);
        let weights = self.lyapunov_weights();
        let target = field.target();
        let ws = field.workspace();
        let mut source = DisturbanceSource::new(self.disturbance, reference_max, cfg.seed);

        let mut samples = Vec::new();
        let mut state = self.initial;
        let mut end_reason = EndReason::TimeLimit;
        let mut inside_since: Option<f64> = None;
        let mut max_increase = f64::NEG_INFINITY;
        let mut min_clearance = f64::INFINITY;
        // clearance is 1-Lipschitz: skip samples that cannot lower the minimum
        let mut clearance_anchor: Option<(Vec2, f64)> = None;
        let mut max_command = 0.0f64;
        let mut path_length = 0.0;
        let mut work = 0.0;
        let kinetic = |s: &RobotState| 0.5 * self.plant.params.m * s.v * s.v + 0.5 * self.plant.params.i * s.omega * s.omega;
        let e0 = kinetic(&self.initial);
        let total = cfg.steps();
        let mut k = 0usize;
        loop {
            let t = k as f64 * cfg.dt;
            let last = k >= total;
            let outcome = if last {
                None
            } else {
                match step(&state, field, &self.controller, &self.plant, &mut source, cfg.dt, cfg.integrator) {
                    Ok(o) => Some(o),
                    Err(SimError::LeftAdmissibleSpace { .. }) => {
                        end_reason = EndReason::Collision;
                        None
                    }
                    Err(SimError::NumericalBlowup) => {
                        end_reason = EndReason::Blowup;
                        None
                    }
                    Err(e) => return Err(e),
                }
            };
            // Final or failed step: record the current state under a fresh,
            // undisturbed command.
            let (current, guidance, command, applied) = match &outcome {
                Some(o) => (o.current, o.guidance, o.command.channels(), o.applied.channels()),
                None => {
                    let g = field.gradient_at(state.position())?;
                    let (_, u) = self.controller.command(self.plant.kind, g, &state);
                    let current = if self.plant.kind.is_dynamic() {
                        state
                    } else {
                        self.plant.kinematic_state(&state, &u)
                    };
                    (current, g, u.channels(), u.channels())
                }
            };
            let dtheta = heading_error(guidance, current.theta).unwrap_or(0.0);
            let xi = lyapunov(field, &current, dtheta, &weights).unwrap_or(f64::NAN);
            if let Some(prev) = samples.last().map(|s: &Sample| s.lyapunov) {
                max_increase = max_increase.max(xi - prev);
            }
            max_command = max_command.max(command[0].abs()).max(command[1].abs());
            let pos = current.position();
            if clearance_anchor.is_none_or(|(a, c)| c - (pos - a).norm() < min_clearance) {
                let c = ws.clearance(pos);
                min_clearance = min_clearance.min(c);
                clearance_anchor = Some((pos, c));
            }
            samples.push(Sample {
                t,
                state: current,
                command,
                applied,
                grad_mag: guidance.norm(),
                dtheta,
                delta: index.signed_distance(current.position()),
                lyapunov: xi,
            });

            let inside = (current.position() - target).norm() <= cfg.pos_tol;
            match (inside, inside_since) {
                (true, None) => inside_since = Some(t),
                (false, Some(_)) => inside_since = None,
                _ => {}
            }
            if inside && cfg.stop_on_converge {
                end_reason = EndReason::Converged;
                break;
            }
            let Some(o) = outcome else {
                if last && inside {
                    end_reason = EndReason::Converged;
                }
                break;
            };
            path_length += (o.next.position() - current.position()).norm();
            work += o.work;
            state = o.next;
            k += 1;
        }

        let final_state = samples.last().expect("at least one sample").state;
        let converged = inside_since.is_some();
        let collided = end_reason == EndReason::Collision;
        let blowup = end_reason == EndReason::Blowup;
        let max_deviation = samples.iter().fold(0.0f64, |m, s| m.max(s.delta.abs()));
        let initial_heading_error = samples[0].dtheta;
        let energy_residual = if self.plant.kind.is_dynamic() {
            work - (kinetic(&final_state) - e0)
        } else {
            0.0
        };
        let max_increase = if max_increase.is_finite() { max_increase } else { 0.0 };
        let metrics = Metrics {
            converged,
            convergence_time: inside_since,
            max_deviation,
            final_pose: Pose {
                x: final_state.x,
                y: final_state.y,
                theta: final_state.theta,
            },
            lyapunov_monotone: max_increase <= LYAPUNOV_SLACK,
            lyapunov_max_increase: max_increase,
            min_clearance,
            diverged: collided || blowup || !converged,
            end_reason,
            collided,
            duration: samples.last().map_or(0.0, |s| s.t),
            steps: k,
            path_length,
            reference_length: reference.length(),
            reference_reached_target: reference.reached_target,
            guidance_max_on_reference: reference.max_guidance,
            initial_heading_error,
            max_command,
            energy_residual,
        };
        Ok((Trajectory { samples }, metrics))
    }
}
