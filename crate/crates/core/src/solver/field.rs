use std::sync::Arc;

use super::stencil::Stencil;
use crate::env::{BvpKind, Workspace};
use crate::error::QueryError;
use crate::Vec2;

/// Outcome of the σ fixed-point loop of the directional kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PicardReport {
    pub passes: usize,
    pub converged: bool,
}

/// A solved potential on the cell-center nodes of a workspace.
///
/// Obstacle cells hold `NaN`. Free cells cut off from every pin and wall
/// (unreachable pockets) hold the constant 1 and carry zero gradient.
#[derive(Debug, Clone)]
pub struct PotentialField {
    workspace: Arc<Workspace>,
    kind: BvpKind,
    target: Vec2,
    pub(crate) stencil: Stencil,
    values: Vec<f64>,
    tolerance: f64,
    residual: f64,
    iterations: usize,
    /// Nodal ∇V.
    gradients: Vec<Vec2>,
    max_gradient: f64,
    pub(crate) picard: Option<PicardReport>,
}

impl PotentialField {
    pub(crate) fn build(
        workspace: Arc<Workspace>,
        kind: BvpKind,
        target: Vec2,
        stencil: Stencil,
        mut values: Vec<f64>,
        tolerance: f64,
        iterations: usize,
    ) -> Self {
        for (i, v) in values.iter_mut().enumerate() {
            if !workspace.is_free(i) {
                *v = f64::NAN;
            }
        }
        // the pin sits at the center of the target's cell
        let target = workspace.snap(target).map_or(target, |i| workspace.center_of(i));
        let mut field = PotentialField {
            workspace,
            kind,
            target,
            stencil,
            values,
            tolerance,
            residual: 0.0,
            iterations,
            gradients: Vec::new(),
            max_gradient: 0.0,
            picard: None,
        };
        field.refresh();
        field
    }

    fn refresh(&mut self) {
        self.residual = self.stencil.max_residual(&self.values);
        self.gradients = (0..self.values.len())
            .map(|i| self.nodal_gradient_of(&self.values, i))
            .collect();
        self.max_gradient = self
            .gradients
            .iter()
            .enumerate()
            .filter(|(i, _)| self.stencil.active[*i])
            .map(|(_, g)| g.norm())
            .fold(0.0, f64::max);
    }

    /// Copy of this field with different node values (pins are not re-imposed).
    pub fn with_values(&self, values: Vec<f64>) -> PotentialField {
        assert_eq!(values.len(), self.values.len(), "value count must match the grid");
        let mut f = self.clone();
        f.values = values;
        f.refresh();
        f
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn kind(&self) -> BvpKind {
        self.kind
    }

    /// Center of the pinned target cell, where the guidance converges.
    pub fn target(&self) -> Vec2 {
        self.target
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[self.workspace.index(col, row)]
    }

    /// Pinned cells and their fixed values.
    pub fn pins(&self) -> Vec<(usize, f64)> {
        self.stencil
            .pinned
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|v| (i, v)))
            .collect()
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.stencil.active[idx]
    }

    /// Max normalized residual recorded when the field was built.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Recomputes the max normalized residual over non-pinned free cells.
    pub fn recompute_residual(&self) -> f64 {
        self.stencil.max_residual(&self.values)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn iterations_used(&self) -> usize {
        self.iterations
    }

    /// Largest nodal gradient magnitude over the connected free space (C_m).
    pub fn max_gradient_magnitude(&self) -> f64 {
        self.max_gradient
    }

    pub fn picard_report(&self) -> Option<PicardReport> {
        self.picard
    }

    /// One extra relaxation sweep with factor `omega`, returning the new field.
    pub fn relaxed(&self, omega: f64) -> PotentialField {
        let mut values = self.values.clone();
        super::stencil::sor_sweep(&self.stencil.compile(), &mut values, omega);
        let mut f = self.with_values(values);
        f.iterations += 1;
        f
    }

    /// Pinned nodes are extrema of `V` and carry no gradient.
    fn nodal_gradient_of(&self, values: &[f64], i: usize) -> Vec2 {
        if !self.stencil.active[i] || self.stencil.pinned[i].is_some() {
            return Vec2::zeros();
        }
        let h = self.workspace.cell_size();
        let w = self.stencil.width;
        let col = i % w;
        let open_e = col + 1 < w && self.stencil.east[i] > 0.0;
        let open_w = col > 0 && self.stencil.east[i - 1] > 0.0;
        let open_n = i + w < values.len() && self.stencil.north[i] > 0.0;
        let open_s = i >= w && self.stencil.north[i - w] > 0.0;
        let diff = |plus: Option<usize>, minus: Option<usize>| match (plus, minus) {
            (Some(p), Some(m)) => (values[p] - values[m]) / (2.0 * h),
            (Some(p), None) => (values[p] - values[i]) / h,
            (None, Some(m)) => (values[i] - values[m]) / h,
            (None, None) => 0.0,
        };
        Vec2::new(
            diff(open_e.then(|| i + 1), open_w.then(|| i - 1)),
            diff(open_n.then(|| i + w), open_s.then(|| i - w)),
        )
    }

    /// −∇V at node `idx` for an arbitrary value vector on this stencil.
    pub(crate) fn nodal_guidance_of(&self, values: &[f64], idx: usize) -> Vec2 {
        -self.nodal_gradient_of(values, idx)
    }

    /// −∇V at node `idx`.
    pub fn nodal_guidance(&self, idx: usize) -> Vec2 {
        -self.gradients[idx]
    }

    /// Bilinear weights of the up-to-four active nodes around `p`.
    fn stencil_weights(&self, p: Vec2) -> ([(usize, f64); 4], usize) {
        let ws = &*self.workspace;
        let h = ws.cell_size();
        let u = (p.x - ws.origin().x) / h - 0.5;
        let v = (p.y - ws.origin().y) / h - 0.5;
        let (i0, j0) = (u.floor(), v.floor());
        let (tx, ty) = (u - i0, v - j0);
        let mut out = [(0usize, 0.0f64); 4];
        let mut n = 0;
        let mut total = 0.0;
        for (di, dj, wgt) in [
            (0, 0, (1.0 - tx) * (1.0 - ty)),
            (1, 0, tx * (1.0 - ty)),
            (0, 1, (1.0 - tx) * ty),
            (1, 1, tx * ty),
        ] {
            let (ci, cj) = (i0 as i64 + di, j0 as i64 + dj);
            if ci < 0 || cj < 0 || ci >= ws.width() as i64 || cj >= ws.height() as i64 {
                continue;
            }
            let idx = ws.index(ci as usize, cj as usize);
            if self.stencil.active[idx] && wgt > 0.0 {
                out[n] = (idx, wgt);
                n += 1;
                total += wgt;
            }
        }
        for o in out.iter_mut().take(n) {
            o.1 /= total;
        }
        (out, n)
    }

    /// Guidance −∇V at `p`: nodal central differences (one-sided next to
    /// walls), bilinearly interpolated over the surrounding active nodes.
    pub fn gradient_at(&self, p: Vec2) -> Result<Vec2, QueryError> {
        if !self.workspace.is_admissible(p) {
            return Err(QueryError::PointNotAdmissible { x: p.x, y: p.y });
        }
        let (nodes, n) = self.stencil_weights(p);
        Ok(nodes[..n]
            .iter()
            .fold(Vec2::zeros(), |acc, &(i, w)| acc - self.gradients[i] * w))
    }

    /// Bilinearly interpolated potential at `p` (same node weights as
    /// [`gradient_at`](Self::gradient_at)); `None` outside admissible space.
    pub fn potential_at(&self, p: Vec2) -> Option<f64> {
        if !self.workspace.is_admissible(p) {
            return None;
        }
        let (nodes, n) = self.stencil_weights(p);
        if n == 0 {
            return self.workspace.locate_index(p).map(|i| self.values[i]);
        }
        Some(nodes[..n].iter().map(|&(i, w)| self.values[i] * w).sum())
    }

    /// Non-pinned free cells that are strict extrema of their connected
    /// neighbours (wall ghosts included), beyond the solve tolerance.
    pub fn check_max_principle(&self) -> Vec<usize> {
        let st = &self.stencil;
        (0..self.values.len())
            .filter(|&i| st.is_unknown(i))
            .filter(|&i| {
                let mut hi = f64::NEG_INFINITY;
                let mut lo = f64::INFINITY;
                let mut any = false;
                for (j, _) in st.links(i) {
                    hi = hi.max(self.values[j]);
                    lo = lo.min(self.values[j]);
                    any = true;
                }
                if st.ghost[i] > 0.0 {
                    hi = hi.max(st.wall_value);
                    lo = lo.min(st.wall_value);
                    any = true;
                }
                let v = self.values[i];
                any && (v > hi + self.tolerance || v < lo - self.tolerance)
            })
            .collect()
    }
}
