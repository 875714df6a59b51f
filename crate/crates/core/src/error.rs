use thiserror::Error;

use crate::solver::PotentialField;

/// Failure to read or validate a scenario document.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("invalid override `{key}`: {reason}")]
    Override { key: String, reason: String },
}

impl ScenarioError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ScenarioError::Validation(msg.into())
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("relaxation did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("target is not reachable from start through free cells")]
    DisconnectedDomain,
    #[error("orientation offset cell is {0}")]
    OffsetCellInvalid(&'static str),
    #[error("no positive-conductance path connects start and target")]
    AllZeroGamma,
    #[error("directional conductance assignment did not settle after {passes} passes")]
    PicardNotConverged {
        passes: usize,
        field: Box<PotentialField>,
    },
    #[error("boundary value problem of kind {found} passed to the {expected} solver")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("point ({x}, {y}) is not in admissible space")]
    PointNotAdmissible { x: f64, y: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum RobotError {
    #[error("steering angle {phi} exceeds limit {limit}")]
    SteeringOutOfRange { phi: f64, limit: f64 },
    #[error("control vector does not match the robot model")]
    ControlMismatch,
}

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("guidance vector vanishes")]
    ZeroGuidance,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("reference path stalled at ({x}, {y}) away from the target")]
    StalledPath { x: f64, y: f64 },
    #[error("fractional saturation requires a recorded reference maximum")]
    MissingReferenceMax,
    #[error("robot left admissible space at ({x}, {y})")]
    LeftAdmissibleSpace { x: f64, y: f64 },
    #[error("numerical blow-up in closed-loop state")]
    NumericalBlowup,
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Robot(#[from] RobotError),
}
