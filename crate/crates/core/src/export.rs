//! Plain-text interchange formats: field CSV, trajectory CSV.
//!
//! Numbers are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Write as _;

use crate::env::{BvpSpec, Workspace};
use crate::error::SolveError;
use crate::sim::Trajectory;
use crate::solver::{field_from_values, PotentialField, SolverConfig};

pub const TRAJECTORY_HEADER: &str = "t,x,y,theta,v,omega,u1,u2,u1_applied,u2_applied,grad_mag,dtheta,delta,lyapunov";

/// 17 significant digits; `NaN` for NaN.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

/// `width,height,cell_size`, then one line per row, bottom row first.
/// Obstacle cells are `NaN`.
pub fn field_to_csv(field: &PotentialField) -> String {
    let ws = field.workspace();
    let mut out = format!("{},{},{}\n", ws.width(), ws.height(), fmt_f64(ws.cell_size()));
    for row in field.values().chunks(ws.width()) {
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn bad(msg: impl Into<String>) -> SolveError {
    SolveError::Invalid(msg.into())
}

/// Node values from a field CSV, checked against the workspace shape.
pub fn values_from_csv(text: &str, ws: &Workspace) -> Result<Vec<f64>, SolveError> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty field file"))?.split(',').collect();
    let [w, h, c] = header[..] else {
        return Err(bad("field header must be width,height,cell_size"));
    };
    let w: usize = w.trim().parse().map_err(|_| bad("bad width"))?;
    let h: usize = h.trim().parse().map_err(|_| bad("bad height"))?;
    let c: f64 = c.trim().parse().map_err(|_| bad("bad cell_size"))?;
    if w != ws.width() || h != ws.height() || c != ws.cell_size() {
        return Err(bad("field shape does not match the workspace"));
    }
    let mut values = Vec::with_capacity(w * h);
    for (r, line) in lines.enumerate() {
        if r >= h {
            if line.trim().is_empty() {
                continue;
            }
            return Err(bad("too many rows"));
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|_| bad(format!("unreadable value in row {r}")))?;
        if row.len() != w {
            return Err(bad(format!("row {r} has {} values", row.len())));
        }
        values.extend(row);
    }
    if values.len() != w * h {
        return Err(bad("too few rows"));
    }
    Ok(values)
}

/// Rebuilds a field from its CSV export. The file is rejected unless it
/// still satisfies the solver's residual tolerance.
pub fn field_from_csv(text: &str, ws: &Workspace, spec: &BvpSpec, cfg: &SolverConfig) -> Result<PotentialField, SolveError> {
    let values = values_from_csv(text, ws)?;
    let field = field_from_values(ws, spec, cfg, values)?;
    if !(field.residual() <= cfg.tolerance) {
        return Err(bad(format!("stored field has residual {:e}", field.residual())));
    }
    Ok(field)
}

/// One row per sample under [`TRAJECTORY_HEADER`]; `u1, u2` are the
/// commanded channels, `*_applied` what reached the robot.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(64 + traj.samples.len() * 320);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for s in &traj.samples {
        let row = [
            s.t,
            s.state.x,
            s.state.y,
            s.state.theta,
            s.state.v,
            s.state.omega,
            s.command[0],
            s.command[1],
            s.applied[0],
            s.applied[1],
            s.grad_mag,
            s.dtheta,
            s.delta,
            s.lyapunov,
        ];
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}
