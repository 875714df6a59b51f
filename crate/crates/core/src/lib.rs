//! Harmonic potential field navigation for separable nonholonomic robots.
//!
//! The crate solves Laplace-type boundary value problems on occupancy grids
//! ([`solver`]), turns the negative potential gradient into synchronizing
//! control signals for differential-drive and front-steered robots
//! ([`controller`], [`robot`]), and simulates the closed loop with actuator
//! disturbances, deviation and Lyapunov monitoring ([`sim`]).

pub mod controller;
pub mod env;
pub mod error;
pub mod export;
pub mod linalg;
pub mod rng;
pub mod sim;
pub mod robot;
pub mod scenario;
pub mod solver;

/// Planar vector in meters (or meters per second for velocities).
pub type Vec2 = nalgebra::Vector2<f64>;

pub use env::{BvpKind, BvpSpec, CellClass, DirectionalConstraint, Workspace};
pub use error::{ControlError, QueryError, RobotError, ScenarioError, SimError, SolveError};
pub use solver::{PotentialField, SolverConfig};
