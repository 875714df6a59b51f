//! Self-contained SVG plots: guidance quiver, obstacles, paths.

use std::fmt::Write as _;

use hpfnav::{PotentialField, Vec2};

/// Longer side of the drawing in pixels.
const SIZE: f64 = 800.0;
/// At most this many arrows along either axis.
const ARROWS: usize = 40;
/// Paths are thinned to about this many vertices.
const PATH_POINTS: usize = 4000;

struct Frame {
    origin: Vec2,
    height: f64,
    scale: f64,
}

impl Frame {
    fn px(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.origin.x) * self.scale, (self.height - (p.y - self.origin.y)) * self.scale)
    }
}

pub struct Plot<'a> {
    field: &'a PotentialField,
    frame: Frame,
    body: String,
}

impl<'a> Plot<'a> {
    /// Obstacles and a quiver of the normalized guidance.
    pub fn new(field: &'a PotentialField) -> Self {
        let ws = field.workspace();
        let ext = ws.extent();
        let frame = Frame {
            origin: ws.origin(),
            height: ext.y,
            scale: SIZE / ext.x.max(ext.y),
        };
        let mut plot = Plot {
            field,
            frame,
            body: String::new(),
        };
        plot.obstacles();
        plot.quiver();
        plot
    }

    fn obstacles(&mut self) {
        let ws = self.field.workspace();
        let s = ws.cell_size() * self.frame.scale;
        let mut d = String::new();
        for row in 0..ws.height() {
            let mut col = 0;
            while col < ws.width() {
                if ws.is_free(ws.index(col, row)) {
                    col += 1;
                    continue;
                }
                let start = col;
                while col < ws.width() && !ws.is_free(ws.index(col, row)) {
                    col += 1;
                }
                let corner = ws.origin() + Vec2::new(start as f64, (row + 1) as f64) * ws.cell_size();
                let (x, y) = self.frame.px(corner);
                let _ = write!(d, "M{x:.2} {y:.2}h{:.2}v{s:.2}h{:.2}z", (col - start) as f64 * s, -((col - start) as f64) * s);
            }
        }
        if !d.is_empty() {
            let _ = writeln!(self.body, r##"<path d="{d}" fill="#555"/>"##);
        }
    }

    fn quiver(&mut self) {
        let ws = self.field.workspace();
        let stride = ws.width().max(ws.height()).div_ceil(ARROWS).max(1);
        let len = 0.8 * stride as f64 * ws.cell_size() * self.frame.scale;
        let mut d = String::new();
        for row in (stride / 2..ws.height()).step_by(stride) {
            for col in (stride / 2..ws.width()).step_by(stride) {
                let i = ws.index(col, row);
                if !ws.is_free(i) {
                    continue;
                }
                let g = self.field.nodal_guidance(i);
                let n = g.norm();
                if !(n > 0.0) {
                    continue;
                }
                let u = Vec2::new(g.x / n, -g.y / n);
                let (cx, cy) = self.frame.px(ws.center_of(i));
                let tail = (cx - u.x * len / 2.0, cy - u.y * len / 2.0);
                let tip = (cx + u.x * len / 2.0, cy + u.y * len / 2.0);
                let side = Vec2::new(-u.y, u.x) * (len * 0.2);
                let back = (tip.0 - u.x * len * 0.35, tip.1 - u.y * len * 0.35);
                let _ = write!(
                    d,
                    "M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}L{:.2} {:.2}",
                    tail.0,
                    tail.1,
                    tip.0,
                    tip.1,
                    back.0 + side.x,
                    back.1 + side.y,
                    tip.0,
                    tip.1,
                    back.0 - side.x,
                    back.1 - side.y
                );
            }
        }
        if !d.is_empty() {
            let _ = writeln!(self.body, r##"<path d="{d}" fill="none" stroke="#999" stroke-width="1"/>"##);
        }
    }

    /// Polyline through `points`; dashed for reference paths.
    pub fn path(&mut self, points: &[Vec2], color: &str, dashed: bool) {
        if points.is_empty() {
            return;
        }
        let step = points.len().div_ceil(PATH_POINTS).max(1);
        let mut pts = String::new();
        let mut emit = |p: Vec2| {
            let (x, y) = self.frame.px(p);
            let _ = write!(pts, "{x:.2},{y:.2} ");
        };
        for p in points.iter().step_by(step) {
            emit(*p);
        }
        if !(points.len() - 1).is_multiple_of(step) {
            emit(points[points.len() - 1]);
        }
        let dash = if dashed { r#" stroke-dasharray="8 5""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            pts.trim_end()
        );
    }

    pub fn marker(&mut self, p: Vec2, color: &str) {
        let (x, y) = self.frame.px(p);
        let _ = writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{color}"/>"#);
    }

    pub fn finish(self) -> String {
        let ext = self.field.workspace().extent();
        let (w, h) = (ext.x * self.frame.scale, ext.y * self.frame.scale);
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}
