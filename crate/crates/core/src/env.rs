//! Raster workspaces and the boundary-value problem descriptions posed on them.
//!
//! Cells are indexed by `(col, row)` with row 0 at the bottom of the
//! workspace. A point `p` lies in cell
//! `(floor((p.x - origin.x) / cell_size), floor((p.y - origin.y) / cell_size))`;
//! points on a shared edge therefore belong to the cell on their upper/right
//! side. Everything outside the grid is treated as obstacle.

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellClass {
    Free,
    Obstacle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workspace {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: Vec2,
    cells: Vec<CellClass>,
    gamma: Option<Vec<f64>>,
}

impl Workspace {
    /// Builds a workspace from row-major cells (row 0 = bottom).
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: Vec2,
        cells: Vec<CellClass>,
        gamma: Option<Vec<f64>>,
    ) -> Result<Self, ScenarioError> {
        if width == 0 || height == 0 {
            return Err(ScenarioError::invalid("grid dimensions must be positive"));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(ScenarioError::invalid("cell_size must be a positive real"));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(ScenarioError::invalid("grid origin must be finite"));
        }
        if cells.len() != width * height {
            return Err(ScenarioError::invalid(format!(
                "cells length {} != width*height {}",
                cells.len(),
                width * height
            )));
        }
        if !cells.contains(&CellClass::Free) {
            return Err(ScenarioError::invalid("workspace has no free cell"));
        }
        if let Some(g) = &gamma {
            if g.len() != cells.len() {
                return Err(ScenarioError::invalid(format!(
                    "gamma length {} != width*height {}",
                    g.len(),
                    cells.len()
                )));
            }
            if let Some(bad) = g.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(ScenarioError::invalid(format!("gamma value {bad} outside [0,1]")));
            }
        }
        Ok(Workspace {
            width,
            height,
            cell_size,
            origin,
            cells,
            gamma,
        })
    }

    /// Obstacle-free workspace.
    pub fn open(width: usize, height: usize, cell_size: f64, origin: Vec2) -> Result<Self, ScenarioError> {
        Self::new(width, height, cell_size, origin, vec![CellClass::Free; width * height], None)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn cells(&self) -> &[CellClass] {
        &self.cells
    }

    pub fn gamma(&self) -> Option<&[f64]> {
        self.gamma.as_deref()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Physical extent `(width, height)` in meters.
    pub fn extent(&self) -> Vec2 {
        Vec2::new(self.width as f64, self.height as f64) * self.cell_size
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn col_row(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn class(&self, idx: usize) -> CellClass {
        self.cells[idx]
    }

    pub fn is_free(&self, idx: usize) -> bool {
        self.cells[idx] == CellClass::Free
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        self.origin + Vec2::new(col as f64 + 0.5, row as f64 + 0.5) * self.cell_size
    }

    pub fn center_of(&self, idx: usize) -> Vec2 {
        let (c, r) = self.col_row(idx);
        self.cell_center(c, r)
    }

    /// Floor-index of the cell containing `p`, or `None` outside the grid.
    pub fn locate(&self, p: Vec2) -> Option<(usize, usize)> {
        let u = ((p.x - self.origin.x) / self.cell_size).floor();
        let v = ((p.y - self.origin.y) / self.cell_size).floor();
        if !(u.is_finite() && v.is_finite()) || u < 0.0 || v < 0.0 {
            return None;
        }
        let (c, r) = (u as usize, v as usize);
        (c < self.width && r < self.height).then_some((c, r))
    }

    pub fn locate_index(&self, p: Vec2) -> Option<usize> {
        self.locate(p).map(|(c, r)| self.index(c, r))
    }

    /// Class of the cell containing `p`; outside the grid is `Obstacle`.
    pub fn cell_at(&self, p: Vec2) -> CellClass {
        self.locate_index(p)
            .map_or(CellClass::Obstacle, |i| self.cells[i])
    }

    pub fn is_admissible(&self, p: Vec2) -> bool {
        self.cell_at(p) == CellClass::Free
    }

    /// Index of the free cell used to pin a point condition at `p`.
    ///
    /// The containing cell must be free; its center is at most half a
    /// diagonal away, so the snap never relocates a goal by more than a cell.
    pub fn snap(&self, p: Vec2) -> Option<usize> {
        self.locate_index(p).filter(|&i| self.is_free(i))
    }

    /// The 4-neighbourhood of a cell as `(neighbor index or None if outside)`
    /// in the fixed order east, west, north, south.
    pub fn neighbors(&self, idx: usize) -> [Option<usize>; 4] {
        let (c, r) = self.col_row(idx);
        [
            (c + 1 < self.width).then(|| idx + 1),
            (c > 0).then(|| idx - 1),
            (r + 1 < self.height).then(|| idx + self.width),
            (r > 0).then(|| idx - self.width),
        ]
    }

    /// Distance from `p` to the nearest obstacle cell or to the grid border.
    pub fn clearance(&self, p: Vec2) -> f64 {
        let h = self.cell_size;
        let local = p - self.origin;
        let ext = self.extent();
        let mut best = local.x.min(local.y).min(ext.x - local.x).min(ext.y - local.y);
        if best <= 0.0 {
            return 0.0;
        }
        let Some((pc, pr)) = self.locate(p) else {
            return 0.0;
        };
        // Search square rings until no ring can contain a closer obstacle.
        let mut ring = 0usize;
        loop {
            if (ring as f64 - 1.0) * h > best {
                break;
            }
            let c0 = pc as isize - ring as isize;
            let c1 = pc as isize + ring as isize;
            let r0 = pr as isize - ring as isize;
            let r1 = pr as isize + ring as isize;
            if c0 < 0 && r0 < 0 && c1 >= self.width as isize && r1 >= self.height as isize {
                break;
            }
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let on_ring = r == r0 || r == r1 || c == c0 || c == c1;
                    if !on_ring || c < 0 || r < 0 || c >= self.width as isize || r >= self.height as isize {
                        continue;
                    }
                    let idx = self.index(c as usize, r as usize);
                    if self.cells[idx] == CellClass::Obstacle {
                        let lo = Vec2::new(c as f64, r as f64) * h;
                        let dx = (lo.x - local.x).max(0.0).max(local.x - (lo.x + h));
                        let dy = (lo.y - local.y).max(0.0).max(local.y - (lo.y + h));
                        best = best.min((dx * dx + dy * dy).sqrt());
                    }
                }
            }
            ring += 1;
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BvpKind {
    /// Laplace with zero-flux walls and point pins at start (1) and target (0).
    Neumann,
    /// Neumann plus a second high pin just past the target along the heading.
    Orientation,
    /// Dirichlet walls at 1, target at 0, direction-switched conductance on a region.
    Directional,
    /// Conductance-weighted Laplace with cell fitness γ.
    Gamma,
}

impl BvpKind {
    pub fn name(self) -> &'static str {
        match self {
            BvpKind::Neumann => "neumann",
            BvpKind::Orientation => "orientation",
            BvpKind::Directional => "directional",
            BvpKind::Gamma => "gamma",
        }
    }
}

/// Cells where a preferred direction of travel is imposed.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalConstraint {
    /// Row-major, one unit vector per cell; `None` outside the constrained region.
    pub field: Vec<Option<Vec2>>,
}

impl DirectionalConstraint {
    pub fn empty(len: usize) -> Self {
        DirectionalConstraint { field: vec![None; len] }
    }

    pub fn is_empty(&self) -> bool {
        self.field.iter().all(Option::is_none)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BvpSpec {
    pub kind: BvpKind,
    pub start: Vec2,
    pub target: Vec2,
    /// Target heading in radians (orientation kind).
    pub heading: f64,
    /// Offset of the orientation pin, in cells.
    pub epsilon_cells: f64,
    pub directional: Option<DirectionalConstraint>,
    pub sigma_forward: f64,
    pub sigma_backward: f64,
}

impl BvpSpec {
    pub fn new(kind: BvpKind, start: Vec2, target: Vec2) -> Self {
        BvpSpec {
            kind,
            start,
            target,
            heading: 0.0,
            epsilon_cells: 1.0,
            directional: None,
            sigma_forward: 1.0,
            sigma_backward: 0.05,
        }
    }

    pub fn neumann(start: Vec2, target: Vec2) -> Self {
        Self::new(BvpKind::Neumann, start, target)
    }

    /// Grid node receiving the orientation pin: the cell holding `target + ε·h`.
    pub fn orientation_point(&self, ws: &Workspace) -> Vec2 {
        let h = Vec2::new(self.heading.cos(), self.heading.sin());
        self.target + h * (self.epsilon_cells * ws.cell_size())
    }

    /// Checks the spec against the workspace it will be solved on.
    pub fn validate(&self, ws: &Workspace) -> Result<(), ScenarioError> {
        let start = ws
            .snap(self.start)
            .ok_or_else(|| ScenarioError::invalid("bvp.start must lie in a free cell"))?;
        let target = ws
            .snap(self.target)
            .ok_or_else(|| ScenarioError::invalid("bvp.target must lie in a free cell"))?;
        if start == target {
            return Err(ScenarioError::invalid("bvp.start and bvp.target map to the same cell"));
        }
        if !self.heading.is_finite() {
            return Err(ScenarioError::invalid("bvp.heading must be finite"));
        }
        if !(self.epsilon_cells.is_finite() && self.epsilon_cells > 0.0) {
            return Err(ScenarioError::invalid("bvp.epsilon_cells must be positive"));
        }
        for (name, s) in [("sigma_forward", self.sigma_forward), ("sigma_backward", self.sigma_backward)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(ScenarioError::invalid(format!("bvp.{name} must be positive")));
            }
        }
        match self.kind {
            BvpKind::Gamma if ws.gamma().is_none() => {
                return Err(ScenarioError::invalid("gamma kind requires a gamma map"));
            }
            BvpKind::Neumann | BvpKind::Orientation | BvpKind::Directional if ws.gamma().is_some() => {
                return Err(ScenarioError::invalid("a gamma map is only valid with the gamma kind"));
            }
            _ => {}
        }
        if let Some(dc) = &self.directional {
            if dc.field.len() != ws.len() {
                return Err(ScenarioError::invalid("directional region size does not match grid"));
            }
            for v in dc.field.iter().flatten() {
                if (v.norm() - 1.0).abs() > 1e-9 {
                    return Err(ScenarioError::invalid("directional vectors must have unit norm"));
                }
            }
        }
        Ok(())
    }
}
