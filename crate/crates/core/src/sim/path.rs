//! Kinematic reference paths and cross-track deviation.

use std::collections::HashMap;

use super::{Integrator, SimConfig};
use crate::error::SimError;
use crate::solver::PotentialField;
use crate::Vec2;

/// A traced streamline of `−∇V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    pub points: Vec<Vec2>,
    /// Largest guidance magnitude met along the path.
    pub max_guidance: f64,
    /// True when the trace ended within `pos_tol` of the target.
    pub reached_target: bool,
}

impl ReferencePath {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

fn direction(field: &PotentialField, p: Vec2) -> Option<Vec2> {
    let g = field.gradient_at(p).ok()?;
    let n = g.norm();
    (n >= crate::controller::ZERO_GUIDANCE).then(|| g / n)
}

/// Traces `Ẋ = −∇V` from `start` with the configured integrator.
///
/// The streamline is followed at unit speed (`dX/ds = g/|g|`) with arc
/// step `dt · 1 m/s`, which keeps the vertex spacing uniform where the
/// guidance is weak (far from pins) or singular (next to them). The trace
/// ends within `pos_tol` of the field's target, closed off by a final
/// segment into the target, or after ten times the grid's half-perimeter
/// of arc length.
pub fn reference_path(field: &PotentialField, start: Vec2, cfg: &SimConfig) -> Result<ReferencePath, SimError> {
    let ws = field.workspace();
    if !ws.is_admissible(start) {
        return Err(SimError::LeftAdmissibleSpace { x: start.x, y: start.y });
    }
    let target = field.target();
    let ds = cfg.dt;
    let ext = ws.extent();
    let max_steps = (10.0 * (ext.x + ext.y) / ds).ceil() as usize;
    let mut points = vec![start];
    let mut p = start;
    let mut max_guidance = 0.0f64;
    for _ in 0..max_steps {
        let g = field.gradient_at(p)?;
        max_guidance = max_guidance.max(g.norm());
        if (p - target).norm() <= cfg.pos_tol {
            // streamlines end in the sink
            if p != target {
                points.push(target);
            }
            return Ok(ReferencePath {
                points,
                max_guidance,
                reached_target: true,
            });
        }
        if g.norm() < crate::controller::ZERO_GUIDANCE {
            return Err(SimError::StalledPath { x: p.x, y: p.y });
        }
        let next = advance(field, p, g / g.norm(), ds, cfg.integrator)
            .ok_or(SimError::LeftAdmissibleSpace { x: p.x, y: p.y })?;
        points.push(next);
        p = next;
    }
    Ok(ReferencePath {
        points,
        max_guidance,
        reached_target: false,
    })
}

/// One streamline step; RK4 falls back to Euler when a stage leaves the
/// admissible set, and the step is shortened if the endpoint does.
/// A step that still ends in an obstacle keeps only its axis component
/// parallel to the blocking wall.
fn advance(field: &PotentialField, p: Vec2, d1: Vec2, ds: f64, integrator: Integrator) -> Option<Vec2> {
    let ws = field.workspace();
    if integrator == Integrator::Rk4 {
        let rk = (|| {
            let d2 = direction(field, p + d1 * (ds / 2.0))?;
            let d3 = direction(field, p + d2 * (ds / 2.0))?;
            let d4 = direction(field, p + d3 * ds)?;
            let q = p + (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (ds / 6.0);
            ws.is_admissible(q).then_some(q)
        })();
        if rk.is_some() {
            return rk;
        }
    }
    let mut h = ds;
    for _ in 0..8 {
        let q = p + d1 * h;
        if ws.is_admissible(q) {
            return Some(q);
        }
        h /= 2.0;
    }
    // one-sided wall gradients can point into an obstacle near corners;
    // slide along the wall instead
    let (x, y) = (Vec2::new(d1.x, 0.0), Vec2::new(0.0, d1.y));
    let along = if x.norm() >= y.norm() { [x, y] } else { [y, x] };
    along
        .into_iter()
        .filter(|d| d.norm() > 0.0)
        .map(|d| p + d * ds)
        .find(|q| ws.is_admissible(*q))
}

const MAX_RINGS: i64 = 64;

/// Spatial hash of polyline segments for nearest-segment queries.
#[derive(Debug, Clone)]
pub struct PolylineIndex {
    points: Vec<Vec2>,
    bucket: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    lo: (i64, i64),
    hi: (i64, i64),
}

impl PolylineIndex {
    pub fn new(points: &[Vec2]) -> Self {
        assert!(!points.is_empty(), "polyline needs at least one vertex");
        let len: f64 = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        let nseg = points.len().saturating_sub(1).max(1) as f64;
        let (bmin, bmax) = points.iter().fold((points[0], points[0]), |(a, b), p| (a.inf(p), b.sup(p)));
        // a few segments per bucket, at most ~128 buckets across
        let bucket = (4.0 * len / nseg).max((bmax - bmin).norm() / 128.0).max(1e-9);
        let key = |p: Vec2| ((p.x / bucket).floor() as i64, (p.y / bucket).floor() as i64);
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN);
        let nsegs = points.len().max(2) - 1;
        for s in 0..nsegs {
            let a = points[s];
            let b = points[(s + 1).min(points.len() - 1)];
            let (ka, kb) = (key(a.inf(&b)), key(a.sup(&b)));
            for i in ka.0..=kb.0 {
                for j in ka.1..=kb.1 {
                    cells.entry((i, j)).or_default().push(s);
                }
            }
            lo = (lo.0.min(ka.0), lo.1.min(ka.1));
            hi = (hi.0.max(kb.0), hi.1.max(kb.1));
        }
        PolylineIndex {
            points: points.to_vec(),
            bucket,
            cells,
            lo,
            hi,
        }
    }

    /// Signed distance from `p` to the polyline, positive to the left of the
    /// direction of travel of the nearest segment.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let (ci, cj) = ((p.x / self.bucket).floor() as i64, (p.y / self.bucket).floor() as i64);
        let mut best = (f64::INFINITY, 0.0, usize::MAX);
        let mut ring = 0i64;
        loop {
            if best.0.is_finite() && (ring - 1) as f64 * self.bucket > best.0 {
                break;
            }
            if ring > MAX_RINGS {
                best = (f64::INFINITY, 0.0, usize::MAX);
                for s in 0..self.points.len().max(2) - 1 {
                    let d = segment_distance(&self.points, s, p);
                    if d.0 < best.0 {
                        best = (d.0, d.1, s);
                    }
                }
                break;
            }
            if ci - ring < self.lo.0 && cj - ring < self.lo.1 && ci + ring > self.hi.0 && cj + ring > self.hi.1 {
                break;
            }
            for i in (ci - ring)..=(ci + ring) {
                for j in (cj - ring)..=(cj + ring) {
                    if (i - ci).abs() != ring && (j - cj).abs() != ring {
                        continue;
                    }
                    if let Some(segs) = self.cells.get(&(i, j)) {
                        for &s in segs {
                            let d = segment_distance(&self.points, s, p);
                            if d.0 < best.0 || (d.0 == best.0 && s < best.2) {
                                best = (d.0, d.1, s);
                            }
                        }
                    }
                }
            }
            ring += 1;
        }
        best.0 * best.1
    }
}

/// `(distance, sign)` from `p` to segment `s`.
fn segment_distance(points: &[Vec2], s: usize, p: Vec2) -> (f64, f64) {
    let a = points[s];
    let Some(&b) = points.get(s + 1) else {
        return ((p - a).norm(), 0.0);
    };
    let d = b - a;
    let l2 = d.norm_squared();
    let t = if l2 > 0.0 { ((p - a).dot(&d) / l2).clamp(0.0, 1.0) } else { 0.0 };
    let q = a + d * t;
    let cross = d.x * (p.y - a.y) - d.y * (p.x - a.x);
    let sign = if cross > 0.0 {
        1.0
    } else if cross < 0.0 {
        -1.0
    } else {
        0.0
    };
    ((p - q).norm(), sign)
}

/// Per-sample signed cross-track deviation and its maximum magnitude.
pub fn deviation_trace(positions: &[Vec2], reference: &[Vec2]) -> (Vec<f64>, f64) {
    let index = PolylineIndex::new(reference);
    let delta: Vec<f64> = positions.iter().map(|&p| index.signed_distance(p)).collect();
    let max = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    (delta, max)
}
