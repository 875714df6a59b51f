//! Five-point conductance stencil on the cell-center grid.
//!
//! Each free cell `c` satisfies `Σ_n g_cn (V_n - V_c) + g_ghost (V_wall - V_c) = 0`
//! where `g_cn` is the face conductance to neighbour `n`. Faces to obstacle
//! cells or the grid border are either closed (zero flux, the mirror-ghost
//! Neumann condition) or connect to a ghost node held at a fixed wall value
//! (Dirichlet).

use std::collections::VecDeque;

use crate::env::Workspace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Boundary {
    ZeroFlux,
    Dirichlet(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Stencil {
    pub width: usize,
    pub height: usize,
    /// Conductance of the face between `i` and `i + 1`.
    pub east: Vec<f64>,
    /// Conductance of the face between `i` and `i + width`.
    pub north: Vec<f64>,
    /// Total conductance from `i` to wall ghost nodes.
    pub ghost: Vec<f64>,
    pub wall_value: f64,
    pub pinned: Vec<Option<f64>>,
    /// Free cells connected to a pin or to a wall ghost; the rest float.
    pub active: Vec<bool>,
}

/// Face conductance between two cells of weight `a` and `b`: harmonic mean,
/// zero if either side is closed.
pub(crate) fn face_conductance(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

impl Stencil {
    /// `weights[i]` is the cell conductivity (0 closes the cell); obstacle
    /// cells are always closed.
    pub fn assemble(ws: &Workspace, weights: &[f64], boundary: Boundary, pins: &[(usize, f64)]) -> Stencil {
        let (w, h) = (ws.width(), ws.height());
        let n = ws.len();
        let weight = |i: usize| if ws.is_free(i) { weights[i] } else { 0.0 };
        let mut east = vec![0.0; n];
        let mut north = vec![0.0; n];
        let mut ghost = vec![0.0; n];
        for i in 0..n {
            let (c, r) = ws.col_row(i);
            if c + 1 < w {
                east[i] = face_conductance(weight(i), weight(i + 1));
            }
            if r + 1 < h {
                north[i] = face_conductance(weight(i), weight(i + w));
            }
            if let Boundary::Dirichlet(_) = boundary {
                if ws.is_free(i) && weight(i) > 0.0 {
                    let walls = ws
                        .neighbors(i)
                        .iter()
                        .filter(|nb| nb.is_none_or(|j| !ws.is_free(j)))
                        .count();
                    ghost[i] = walls as f64 * weight(i);
                }
            }
        }
        let mut pinned = vec![None; n];
        for &(i, v) in pins {
            pinned[i] = Some(v);
        }
        let wall_value = match boundary {
            Boundary::ZeroFlux => 0.0,
            Boundary::Dirichlet(v) => v,
        };
        let mut st = Stencil {
            width: w,
            height: h,
            east,
            north,
            ghost,
            wall_value,
            pinned,
            active: vec![false; n],
        };
        let seeds: Vec<usize> = (0..n)
            .filter(|&i| ws.is_free(i) && (st.pinned[i].is_some() || st.ghost[i] > 0.0))
            .collect();
        st.active = st.reachable(&seeds);
        st
    }

    pub fn len(&self) -> usize {
        self.east.len()
    }

    /// Neighbours of `i` joined by an open face, as `(index, conductance)`.
    pub fn links(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let w = self.width;
        let col = i % w;
        let e = (col + 1 < w).then(|| (i + 1, self.east[i]));
        let west = (col > 0).then(|| (i - 1, self.east[i - 1]));
        let nth = (i + w < self.len()).then(|| (i + w, self.north[i]));
        let s = (i >= w).then(|| (i - w, self.north[i - w]));
        [e, west, nth, s].into_iter().flatten().filter(|&(_, c)| c > 0.0)
    }

    /// Cells reachable from `seeds` through open faces.
    pub fn reachable(&self, seeds: &[usize]) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in seeds {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(i) = queue.pop_front() {
            for (j, _) in self.links(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// Cells whose equation is relaxed: active and not pinned.
    pub fn is_unknown(&self, i: usize) -> bool {
        self.active[i] && self.pinned[i].is_none()
    }

    /// Local balance `(Σ g V_n + g_ghost V_wall) / Σ g - V_i`, i.e. the
    /// Jacobi update at cell `i`.
    pub fn imbalance(&self, values: &[f64], i: usize) -> f64 {
        let mut flux = self.ghost[i] * self.wall_value;
        let mut diag = self.ghost[i];
        for (j, c) in self.links(i) {
            flux += c * values[j];
            diag += c;
        }
        if diag > 0.0 {
            flux / diag - values[i]
        } else {
            0.0
        }
    }

    pub fn max_residual(&self, values: &[f64]) -> f64 {
        (0..self.len())
            .filter(|&i| self.is_unknown(i))
            .map(|i| self.imbalance(values, i).abs())
            .fold(0.0, f64::max)
    }

    pub fn compile(&self) -> Vec<Node> {
        (0..self.len())
            .filter(|&i| self.is_unknown(i))
            .filter_map(|i| {
                let mut node = Node {
                    idx: i,
                    count: 0,
                    nbr: [0; 4],
                    cond: [0.0; 4],
                    inv_diag: 0.0,
                    ghost_flux: self.ghost[i] * self.wall_value,
                };
                let mut diag = self.ghost[i];
                for (j, c) in self.links(i) {
                    node.nbr[node.count] = j;
                    node.cond[node.count] = c;
                    node.count += 1;
                    diag += c;
                }
                (diag > 0.0).then(|| {
                    node.inv_diag = 1.0 / diag;
                    node
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Node {
    idx: usize,
    count: usize,
    nbr: [usize; 4],
    cond: [f64; 4],
    inv_diag: f64,
    ghost_flux: f64,
}

/// Max |Jacobi update| over compiled nodes; equals [`Stencil::max_residual`].
pub(crate) fn node_residual(nodes: &[Node], values: &[f64]) -> f64 {
    nodes
        .iter()
        .map(|node| {
            let mut flux = node.ghost_flux;
            for k in 0..node.count {
                flux += node.cond[k] * values[node.nbr[k]];
            }
            (flux * node.inv_diag - values[node.idx]).abs()
        })
        .fold(0.0, f64::max)
}

/// One lexicographic successive-over-relaxation sweep.
pub(crate) fn sor_sweep(nodes: &[Node], values: &mut [f64], omega: f64) {
    for node in nodes {
        let mut flux = node.ghost_flux;
        for k in 0..node.count {
            flux += node.cond[k] * values[node.nbr[k]];
        }
        let v = &mut values[node.idx];
        *v += omega * (flux * node.inv_diag - *v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec2;

    #[test]
    fn harmonic_mean_closes_zero_faces() {
        assert_eq!(face_conductance(0.0, 1.0), 0.0);
        assert_eq!(face_conductance(1.0, 1.0), 1.0);
        assert!((face_conductance(0.1, 1.0) - 0.2 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_ghosts_count_walls() {
        let ws = Workspace::open(3, 2, 1.0, Vec2::zeros()).unwrap();
        let st = Stencil::assemble(&ws, &[1.0; 6], Boundary::Dirichlet(1.0), &[(4, 0.0)]);
        // corner cells see two walls, edge-middle cells see one
        assert_eq!(st.ghost[0], 2.0);
        assert_eq!(st.ghost[1], 1.0);
        assert!(st.active.iter().all(|&a| a));
    }

    #[test]
    fn unpinned_pockets_float() {
        use crate::env::CellClass::*;
        // . # .   -- right cell is sealed off from the pins on the left
        let ws = Workspace::new(3, 1, 1.0, Vec2::zeros(), vec![Free, Obstacle, Free], None).unwrap();
        let st = Stencil::assemble(&ws, &[1.0; 3], Boundary::ZeroFlux, &[(0, 1.0)]);
        assert_eq!(st.active, vec![true, false, false]);
    }
}
