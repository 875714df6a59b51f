//! Harmonic potential fields on the workspace grid.
//!
//! All four problem kinds reduce to a conductance-weighted Laplace problem
//! (see [`stencil`]) with point pins and either zero-flux or Dirichlet walls,
//! solved by lexicographic successive over-relaxation. The directional kind
//! wraps that linear solve in a fixed-point loop over the σ assignment.

mod field;
pub(crate) mod stencil;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use field::{PicardReport, PotentialField};
use stencil::{node_residual, sor_sweep, Boundary, Stencil};

use crate::env::{BvpKind, BvpSpec, Workspace};
use crate::error::SolveError;
use crate::Vec2;

/// Residual is recomputed every this many sweeps.
const CHECK_INTERVAL: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// SOR factor in (0, 2). `None` picks a near-optimal factor from the grid size.
    pub relaxation_factor: Option<f64>,
    /// Stop once the max normalized residual falls to this level.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Outer σ-assignment passes for the directional kind.
    pub picard_max: usize,
    /// Blend of the new field into the one used for the next σ assignment.
    pub picard_relax: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            relaxation_factor: None,
            tolerance: 1e-8,
            max_iterations: 200_000,
            picard_max: 50,
            picard_relax: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if let Some(w) = self.relaxation_factor {
            if !(w > 0.0 && w < 2.0) {
                return Err(format!("relaxation_factor {w} outside (0, 2)"));
            }
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err("tolerance must be positive".into());
        }
        if self.max_iterations == 0 || self.picard_max == 0 {
            return Err("iteration limits must be at least 1".into());
        }
        if !(self.picard_relax > 0.0 && self.picard_relax <= 1.0) {
            return Err("picard_relax must lie in (0, 1]".into());
        }
        Ok(())
    }

    /// Relaxation factor used on `ws`.
    pub fn omega_for(&self, ws: &Workspace) -> f64 {
        self.relaxation_factor.unwrap_or_else(|| {
            // Optimal SOR factor of the Dirichlet model problem on the longer side.
            let n = ws.width().max(ws.height()).max(2) as f64;
            2.0 / (1.0 + (std::f64::consts::PI / n).sin())
        })
    }
}

/// Pins, cell weights and boundary mode of one linear problem.
#[derive(Debug, Clone)]
pub(crate) struct LinearProblem {
    pub pins: Vec<(usize, f64)>,
    pub weights: Vec<f64>,
    pub boundary: Boundary,
}

impl LinearProblem {
    pub fn stencil(&self, ws: &Workspace) -> Stencil {
        Stencil::assemble(ws, &self.weights, self.boundary, &self.pins)
    }
}

fn cell_of(ws: &Workspace, p: Vec2, what: &str) -> Result<usize, SolveError> {
    ws.snap(p)
        .ok_or_else(|| SolveError::Invalid(format!("{what} ({}, {}) is not in a free cell", p.x, p.y)))
}

fn check_kind(spec: &BvpSpec, expected: BvpKind) -> Result<(), SolveError> {
    if spec.kind == expected {
        Ok(())
    } else {
        Err(SolveError::WrongKind {
            expected: expected.name(),
            found: spec.kind.name(),
        })
    }
}

fn unit_weights(ws: &Workspace) -> Vec<f64> {
    (0..ws.len()).map(|i| if ws.is_free(i) { 1.0 } else { 0.0 }).collect()
}

/// Start/target pins for the point-pinned kinds, with the connectivity check.
fn point_pins(ws: &Workspace, spec: &BvpSpec, weights: &[f64], gamma: bool) -> Result<Vec<(usize, f64)>, SolveError> {
    let s = cell_of(ws, spec.start, "start")?;
    let t = cell_of(ws, spec.target, "target")?;
    if s == t {
        return Err(SolveError::Invalid("start and target share a cell".into()));
    }
    let probe = Stencil::assemble(ws, weights, Boundary::ZeroFlux, &[]);
    if !probe.reachable(&[s])[t] {
        return Err(if gamma {
            SolveError::AllZeroGamma
        } else {
            SolveError::DisconnectedDomain
        });
    }
    Ok(vec![(s, 1.0), (t, 0.0)])
}

pub(crate) fn neumann_problem(ws: &Workspace, spec: &BvpSpec) -> Result<LinearProblem, SolveError> {
    let weights = unit_weights(ws);
    let pins = point_pins(ws, spec, &weights, false)?;
    Ok(LinearProblem {
        pins,
        weights,
        boundary: Boundary::ZeroFlux,
    })
}

pub(crate) fn orientation_problem(ws: &Workspace, spec: &BvpSpec) -> Result<LinearProblem, SolveError> {
    let mut problem = neumann_problem(ws, spec)?;
    let t = problem.pins[1].0;
    let offset = ws
        .snap(spec.orientation_point(ws))
        .ok_or(SolveError::OffsetCellInvalid("not a free cell"))?;
    if offset == t {
        return Err(SolveError::OffsetCellInvalid("the target cell"));
    }
    if offset == problem.pins[0].0 {
        return Err(SolveError::OffsetCellInvalid("the start cell"));
    }
    problem.pins.push((offset, 1.0));
    Ok(problem)
}

pub(crate) fn gamma_problem(ws: &Workspace, spec: &BvpSpec) -> Result<LinearProblem, SolveError> {
    let gamma = ws
        .gamma()
        .ok_or_else(|| SolveError::Invalid("gamma kind requires a gamma map".into()))?;
    let weights: Vec<f64> = (0..ws.len())
        .map(|i| if ws.is_free(i) { gamma[i] } else { 0.0 })
        .collect();
    let pins = point_pins(ws, spec, &weights, true)?;
    Ok(LinearProblem {
        pins,
        weights,
        boundary: Boundary::ZeroFlux,
    })
}

/// Directional problem with a given σ per cell (1 outside the region).
pub(crate) fn directional_problem(ws: &Workspace, spec: &BvpSpec, sigma: Vec<f64>) -> Result<LinearProblem, SolveError> {
    let t = cell_of(ws, spec.target, "target")?;
    let weights = (0..ws.len())
        .map(|i| if ws.is_free(i) { sigma[i] } else { 0.0 })
        .collect();
    Ok(LinearProblem {
        pins: vec![(t, 0.0)],
        weights,
        boundary: Boundary::Dirichlet(1.0),
    })
}

/// Relaxes `values` in place on `stencil`; returns `(residual, sweeps)`.
fn relax(stencil: &Stencil, values: &mut [f64], cfg: &SolverConfig, omega: f64) -> (f64, usize) {
    let nodes = stencil.compile();
    let mut residual = node_residual(&nodes, values);
    let mut sweeps = 0;
    while residual > cfg.tolerance && sweeps < cfg.max_iterations {
        let burst = CHECK_INTERVAL.min(cfg.max_iterations - sweeps);
        for _ in 0..burst {
            sor_sweep(&nodes, values, omega);
        }
        sweeps += burst;
        residual = node_residual(&nodes, values);
    }
    (residual, sweeps)
}

fn initial_values(stencil: &Stencil) -> Vec<f64> {
    (0..stencil.len())
        .map(|i| match stencil.pinned[i] {
            Some(v) => v,
            None if stencil.active[i] => 0.5,
            None => 1.0,
        })
        .collect()
}

fn solve_linear(
    ws: &Workspace,
    spec: &BvpSpec,
    problem: &LinearProblem,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<PotentialField, SolveError> {
    cfg.validate().map_err(SolveError::Invalid)?;
    let stencil = problem.stencil(ws);
    let mut values = initial_values(&stencil);
    if let Some(w) = warm {
        for i in 0..values.len() {
            if stencil.is_unknown(i) {
                values[i] = w[i];
            }
        }
    }
    let (residual, iterations) = relax(&stencil, &mut values, cfg, cfg.omega_for(ws));
    if residual > cfg.tolerance {
        return Err(SolveError::NonConvergence { residual, iterations });
    }
    Ok(PotentialField::build(
        Arc::new(ws.clone()),
        spec.kind,
        spec.target,
        stencil,
        values,
        cfg.tolerance,
        iterations,
    ))
}

/// Laplace field with zero-flux walls, `V(start) = 1`, `V(target) = 0`.
pub fn solve_neumann(ws: &Workspace, spec: &BvpSpec, cfg: &SolverConfig) -> Result<PotentialField, SolveError> {
    check_kind(spec, BvpKind::Neumann)?;
    let problem = neumann_problem(ws, spec)?;
    solve_linear(ws, spec, &problem, cfg, None)
}

/// Neumann field with an extra `V = 1` pin one offset past the target along
/// the heading, so the flow enters the target travelling along `heading`.
pub fn solve_orientation(ws: &Workspace, spec: &BvpSpec, cfg: &SolverConfig) -> Result<PotentialField, SolveError> {
    check_kind(spec, BvpKind::Orientation)?;
    let problem = orientation_problem(ws, spec)?;
    solve_linear(ws, spec, &problem, cfg, None)
}

/// `∇·(γ∇V) = 0` with harmonic-mean face conductances.
pub fn solve_gamma(ws: &Workspace, spec: &BvpSpec, cfg: &SolverConfig) -> Result<PotentialField, SolveError> {
    check_kind(spec, BvpKind::Gamma)?;
    let problem = gamma_problem(ws, spec)?;
    solve_linear(ws, spec, &problem, cfg, None)
}

/// Direction-constrained field: walls at `V = 1`, target at 0, and on the
/// constrained region σ switched between `sigma_forward` (flow agrees with
/// the preferred direction) and `sigma_backward`, iterated to a fixed point.
///
/// If the σ assignment is still changing after `picard_max` passes the last
/// field is returned inside [`SolveError::PicardNotConverged`].
pub fn solve_directional(ws: &Workspace, spec: &BvpSpec, cfg: &SolverConfig) -> Result<PotentialField, SolveError> {
    check_kind(spec, BvpKind::Directional)?;
    let region = spec
        .directional
        .as_ref()
        .map(|d| d.field.clone())
        .unwrap_or_else(|| vec![None; ws.len()]);
    if region.len() != ws.len() {
        return Err(SolveError::Invalid("directional region size does not match grid".into()));
    }
    let assign = |forward: &[bool]| -> Vec<f64> {
        (0..ws.len())
            .map(|i| match (region[i], forward[i]) {
                (None, _) => 1.0,
                (Some(_), true) => spec.sigma_forward,
                (Some(_), false) => spec.sigma_backward,
            })
            .collect()
    };

    let mut forward = vec![true; ws.len()];
    let mut sigma = assign(&forward);
    let mut field = solve_linear(ws, spec, &directional_problem(ws, spec, sigma.clone())?, cfg, None)?;
    let mut probe = field.values().to_vec();
    for pass in 1..=cfg.picard_max {
        for (i, lam) in region.iter().enumerate() {
            if let Some(lam) = lam {
                forward[i] = field.nodal_guidance_of(&probe, i).dot(lam) > 0.0;
            }
        }
        let next = assign(&forward);
        if next == sigma {
            field.picard = Some(PicardReport { passes: pass, converged: true });
            return Ok(field);
        }
        if pass == cfg.picard_max {
            break;
        }
        sigma = next;
        let prev = field.values().to_vec();
        field = solve_linear(ws, spec, &directional_problem(ws, spec, sigma.clone())?, cfg, Some(&prev))?;
        let a = cfg.picard_relax;
        probe = prev
            .iter()
            .zip(field.values())
            .map(|(o, n)| o + a * (n - o))
            .collect();
    }
    field.picard = Some(PicardReport {
        passes: cfg.picard_max,
        converged: false,
    });
    Err(SolveError::PicardNotConverged {
        passes: cfg.picard_max,
        field: Box::new(field),
    })
}

/// Dispatches on `spec.kind`.
pub fn solve(ws: &Workspace, spec: &BvpSpec, cfg: &SolverConfig) -> Result<PotentialField, SolveError> {
    match spec.kind {
        BvpKind::Neumann => solve_neumann(ws, spec, cfg),
        BvpKind::Orientation => solve_orientation(ws, spec, cfg),
        BvpKind::Gamma => solve_gamma(ws, spec, cfg),
        BvpKind::Directional => solve_directional(ws, spec, cfg),
    }
}

/// Rebuilds a field for `(ws, spec)` from externally supplied values, e.g. a
/// cached CSV export. Pins are re-imposed; the residual is recomputed.
pub fn field_from_values(
    ws: &Workspace,
    spec: &BvpSpec,
    cfg: &SolverConfig,
    values: Vec<f64>,
) -> Result<PotentialField, SolveError> {
    if values.len() != ws.len() {
        return Err(SolveError::Invalid("value count does not match grid".into()));
    }
    let problem = match spec.kind {
        BvpKind::Neumann => neumann_problem(ws, spec)?,
        BvpKind::Orientation => orientation_problem(ws, spec)?,
        BvpKind::Gamma => gamma_problem(ws, spec)?,
        BvpKind::Directional => {
            // Recover the σ assignment from the stored field itself.
            let plain = directional_problem(ws, spec, vec![1.0; ws.len()])?;
            let probe = PotentialField::build(
                Arc::new(ws.clone()),
                spec.kind,
                spec.target,
                plain.stencil(ws),
                values.clone(),
                cfg.tolerance,
                0,
            );
            let sigma = (0..ws.len())
                .map(|i| match spec.directional.as_ref().and_then(|d| d.field[i]) {
                    None => 1.0,
                    Some(lam) if probe.nodal_guidance(i).dot(&lam) > 0.0 => spec.sigma_forward,
                    Some(_) => spec.sigma_backward,
                })
                .collect();
            directional_problem(ws, spec, sigma)?
        }
    };
    let stencil = problem.stencil(ws);
    let mut values = values;
    for (i, v) in values.iter_mut().enumerate() {
        if let Some(p) = stencil.pinned[i] {
            *v = p;
        } else if !stencil.active[i] {
            *v = if ws.is_free(i) { 1.0 } else { f64::NAN };
        }
    }
    if (0..ws.len()).any(|i| stencil.active[i] && !values[i].is_finite()) {
        return Err(SolveError::Invalid("non-finite value on a free cell".into()));
    }
    Ok(PotentialField::build(
        Arc::new(ws.clone()),
        spec.kind,
        spec.target,
        stencil,
        values,
        cfg.tolerance,
        0,
    ))
}
