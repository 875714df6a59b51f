//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the solver: the discrete systems and the gradient
//! rule are rebuilt from their definitions.

#![allow(dead_code)]

use std::path::PathBuf;

use hpfnav::rng::SplitMix64;
use hpfnav::scenario::{load_scenario, Scenario};
use hpfnav::{BvpKind, BvpSpec, CellClass, PotentialField, Vec2, Workspace};
use nalgebra::{DMatrix, DVector};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn scenario(name: &str) -> Scenario {
    let text = std::fs::read_to_string(scenario_path(name)).expect("fixture exists");
    load_scenario(&text).expect("fixture is valid")
}

/// A random solver test case.
#[derive(Debug, Clone)]
pub struct Layout {
    pub ws: Workspace,
    pub spec: BvpSpec,
}

/// Random obstacles (about `density` of the cells) and, for the gamma kind,
/// γ drawn from `{0.1, 0.4, 1.0}`. Start and target are distinct free cells;
/// connectivity is not guaranteed.
pub fn random_layout(w: usize, h: usize, density: f64, kind: BvpKind, rng: &mut SplitMix64) -> Option<Layout> {
    let n = w * h;
    let cells: Vec<CellClass> = (0..n)
        .map(|_| if rng.next_f64() < density { CellClass::Obstacle } else { CellClass::Free })
        .collect();
    let gamma = (kind == BvpKind::Gamma).then(|| {
        (0..n)
            .map(|_| [0.1, 0.4, 1.0][(rng.next_u64() % 3) as usize])
            .collect::<Vec<f64>>()
    });
    let free: Vec<usize> = (0..n).filter(|&i| cells[i] == CellClass::Free).collect();
    if free.len() < 2 {
        return None;
    }
    let s = free[(rng.next_u64() % free.len() as u64) as usize];
    let mut t = s;
    while t == s {
        t = free[(rng.next_u64() % free.len() as u64) as usize];
    }
    let ws = Workspace::new(w, h, 1.0, Vec2::zeros(), cells, gamma).ok()?;
    let center = |i: usize| Vec2::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
    let mut spec = BvpSpec::new(kind, center(s), center(t));
    if kind == BvpKind::Directional {
        spec.directional = Some(hpfnav::DirectionalConstraint::empty(n));
    }
    Some(Layout { ws, spec })
}

fn cell_index(ws: &Workspace, p: Vec2) -> usize {
    let c = ((p.x - ws.origin().x) / ws.cell_size()).floor() as usize;
    let r = ((p.y - ws.origin().y) / ws.cell_size()).floor() as usize;
    r * ws.width() + c
}

/// Cell conductivity: 0 for obstacles, γ for the gamma kind, otherwise 1.
fn conductivity(ws: &Workspace, kind: BvpKind, i: usize) -> f64 {
    if ws.cells()[i] == CellClass::Obstacle {
        0.0
    } else if kind == BvpKind::Gamma {
        ws.gamma().unwrap()[i]
    } else {
        1.0
    }
}

/// Direct solve of the five-point conductance system. Faces carry the
/// harmonic mean of the two cell conductivities. Neumann and gamma kinds
/// pin start = 1 and target = 0 with closed walls; the directional kind with
/// an empty region pins only the target and ties every wall face to a ghost
/// at 1. Cells not connected to any fixed value come back as `None`.
pub fn dense_solve(ws: &Workspace, spec: &BvpSpec) -> Vec<Option<f64>> {
    let (w, h) = (ws.width(), ws.height());
    let n = w * h;
    let kind = spec.kind;
    let dirichlet = kind == BvpKind::Directional;
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    fixed[cell_index(ws, spec.target)] = Some(0.0);
    if !dirichlet {
        fixed[cell_index(ws, spec.start)] = Some(1.0);
    }
    let k = |i: usize| conductivity(ws, kind, i);
    let face = |a: f64, b: f64| if a > 0.0 && b > 0.0 { 2.0 * a * b / (a + b) } else { 0.0 };
    let neighbours = |i: usize| {
        let (c, r) = (i % w, i / w);
        [
            (c + 1 < w).then(|| i + 1),
            (c > 0).then(|| i - 1),
            (r + 1 < h).then(|| i + w),
            (r > 0).then(|| i - w),
        ]
    };
    let wall_faces = |i: usize| -> f64 {
        if !dirichlet || k(i) <= 0.0 {
            return 0.0;
        }
        neighbours(i)
            .iter()
            .filter(|nb| nb.is_none_or(|j| ws.cells()[j] == CellClass::Obstacle))
            .count() as f64
            * k(i)
    };

    // cells connected to something fixed
    let mut connected = vec![false; n];
    let mut stack: Vec<usize> = (0..n)
        .filter(|&i| ws.cells()[i] == CellClass::Free && (fixed[i].is_some() || wall_faces(i) > 0.0))
        .collect();
    for &i in &stack {
        connected[i] = true;
    }
    while let Some(i) = stack.pop() {
        for j in neighbours(i).into_iter().flatten() {
            if !connected[j] && face(k(i), k(j)) > 0.0 {
                connected[j] = true;
                stack.push(j);
            }
        }
    }

    let unknowns: Vec<usize> = (0..n).filter(|&i| connected[i] && fixed[i].is_none()).collect();
    let mut slot = vec![usize::MAX; n];
    for (s, &i) in unknowns.iter().enumerate() {
        slot[i] = s;
    }
    let m = unknowns.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (row, &i) in unknowns.iter().enumerate() {
        let g = wall_faces(i);
        a[(row, row)] += g;
        b[row] += g * 1.0;
        for j in neighbours(i).into_iter().flatten() {
            let c = face(k(i), k(j));
            if c == 0.0 {
                continue;
            }
            a[(row, row)] += c;
            match fixed[j] {
                Some(v) => b[row] += c * v,
                None => a[(row, slot[j])] -= c,
            }
        }
    }
    let x = if m > 0 {
        a.lu().solve(&b).expect("connected system is nonsingular")
    } else {
        DVector::zeros(0)
    };
    (0..n)
        .map(|i| {
            if fixed[i].is_some() && connected[i] {
                fixed[i]
            } else if slot[i] != usize::MAX {
                Some(x[slot[i]])
            } else {
                None
            }
        })
        .collect()
}

/// Largest per-cell gap between a solved field and the dense oracle, over
/// cells the oracle determines.
pub fn oracle_gap(field: &PotentialField, oracle: &[Option<f64>]) -> f64 {
    field
        .values()
        .iter()
        .zip(oracle)
        .filter_map(|(v, o)| o.map(|o| (v - o).abs()))
        .fold(0.0, f64::max)
}

/// Guidance `−∇V` at `p` rebuilt from node values alone.
///
/// Nodes are cell centers. A node's gradient is a central difference over
/// open faces (one-sided where one side is a wall or obstacle); pinned
/// nodes and nodes outside the connected set have none. The four nodes
/// around `p` are blended bilinearly, skipping nodes outside the connected
/// set and renormalizing the weights.
pub fn guidance_oracle(ws: &Workspace, values: &[f64], active: &[bool], pinned: &[bool], p: Vec2) -> Vec2 {
    let (w, h, hs) = (ws.width(), ws.height(), ws.cell_size());
    let node_grad = |c: usize, r: usize| -> Vec2 {
        let i = r * w + c;
        if !active[i] || pinned[i] {
            return Vec2::zeros();
        }
        let open = |cc: i64, rr: i64| -> Option<f64> {
            if cc < 0 || rr < 0 || cc >= w as i64 || rr >= h as i64 {
                return None;
            }
            let j = rr as usize * w + cc as usize;
            (ws.cells()[j] == CellClass::Free).then(|| values[j])
        };
        let d = |plus: Option<f64>, minus: Option<f64>| match (plus, minus) {
            (Some(a), Some(b)) => (a - b) / (2.0 * hs),
            (Some(a), None) => (a - values[i]) / hs,
            (None, Some(b)) => (values[i] - b) / hs,
            (None, None) => 0.0,
        };
        let (ci, ri) = (c as i64, r as i64);
        Vec2::new(d(open(ci + 1, ri), open(ci - 1, ri)), d(open(ci, ri + 1), open(ci, ri - 1)))
    };
    let u = (p.x - ws.origin().x) / hs - 0.5;
    let v = (p.y - ws.origin().y) / hs - 0.5;
    let (i0, j0) = (u.floor() as i64, v.floor() as i64);
    let (fx, fy) = (u - u.floor(), v - v.floor());
    let mut sum = Vec2::zeros();
    let mut total = 0.0;
    for (dc, dr, wgt) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
        let (c, r) = (i0 + dc, j0 + dr);
        if c < 0 || r < 0 || c >= w as i64 || r >= h as i64 || wgt <= 0.0 {
            continue;
        }
        let i = r as usize * w + c as usize;
        if !active[i] {
            continue;
        }
        sum -= node_grad(c as usize, r as usize) * wgt;
        total += wgt;
    }
    if total > 0.0 {
        sum / total
    } else {
        sum
    }
}
