//! Scenario documents: JSON in, validated [`Scenario`] out.
//!
//! Grid `rows` (and the directional `region_rows` and the `gamma` array) are
//! written top row first, the way a map reads on screen; internally row 0 is
//! the bottom of the workspace.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::controller::{Controller, DampingMode, GainSet};
use crate::env::{BvpKind, BvpSpec, CellClass, DirectionalConstraint, Workspace};
use crate::error::ScenarioError;
use crate::robot::{ModelKind, RobotParams, RobotState};
use crate::sim::{ClosedLoop, Disturbance, Plant, SimConfig};
use crate::solver::SolverConfig;
use crate::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub width: usize,
    pub height: usize,
    /// Meters per cell; derived from `extent` when omitted.
    #[serde(default)]
    pub cell_size: Option<f64>,
    /// Workspace size in meters `[x, y]`.
    #[serde(default)]
    pub extent: Option<[f64; 2]>,
    /// Position of the lower-left grid corner.
    #[serde(default)]
    pub origin: [f64; 2],
    /// `'.'` free, `'#'` obstacle, top row first. All free when omitted.
    #[serde(default)]
    pub rows: Option<Vec<String>>,
    /// Axis-aligned blocks; cells whose centers fall inside become obstacles.
    #[serde(default)]
    pub obstacles: Vec<RectDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectDoc {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

fn one() -> f64 {
    1.0
}

fn sigma_b() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvpDoc {
    pub kind: BvpKind,
    pub start: [f64; 2],
    pub target: [f64; 2],
    #[serde(default)]
    pub heading: f64,
    #[serde(default = "one")]
    pub epsilon_cells: f64,
    /// Preferred travel direction per cell, top row first:
    /// `'>' '<' '^' 'v'`, or `'.'` for unconstrained.
    #[serde(default)]
    pub region_rows: Option<Vec<String>>,
    #[serde(default = "one")]
    pub sigma_forward: f64,
    #[serde(default = "sigma_b")]
    pub sigma_backward: f64,
}

/// Controller-side parameter overrides (the plant keeps the true values).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelErrorDoc {
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default, rename = "W")]
    pub w: Option<f64>,
    #[serde(default, rename = "L")]
    pub l: Option<f64>,
    #[serde(default, rename = "M")]
    pub m: Option<f64>,
    #[serde(default, rename = "I")]
    pub i: Option<f64>,
}

fn phi_max() -> f64 {
    1.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotDoc {
    pub kind: ModelKind,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "one", rename = "W")]
    pub w: f64,
    #[serde(default = "one", rename = "L")]
    pub l: f64,
    #[serde(default = "one", rename = "M")]
    pub m: f64,
    #[serde(default = "one", rename = "I")]
    pub i: f64,
    #[serde(default = "phi_max")]
    pub phi_max: f64,
    #[serde(default)]
    pub model_error: Option<ModelErrorDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDoc {
    #[serde(default = "k1", rename = "K1")]
    pub k1: f64,
    #[serde(default = "k2", rename = "K2")]
    pub k2: f64,
    #[serde(default = "kd", rename = "KD1")]
    pub kd1: f64,
    #[serde(default = "kd", rename = "KD2")]
    pub kd2: f64,
    #[serde(default)]
    pub damping: DampingMode,
}

fn k1() -> f64 {
    GainSet::default().k1
}

fn k2() -> f64 {
    GainSet::default().k2
}

fn kd() -> f64 {
    GainSet::default().kd1
}

impl ControllerDoc {
    pub fn gains(&self) -> GainSet {
        GainSet {
            k1: self.k1,
            k2: self.k2,
            kd1: self.kd1,
            kd2: self.kd2,
        }
    }
}

/// The scenario file, with every default filled in after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub grid: GridDoc,
    /// Cell fitness in [0, 1], top row first.
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    pub bvp: BvpDoc,
    pub robot: RobotDoc,
    #[serde(default = "default_controller")]
    pub controller: ControllerDoc,
    pub initial: RobotState,
    #[serde(default)]
    pub disturbance: Disturbance,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_controller() -> ControllerDoc {
    ControllerDoc {
        k1: k1(),
        k2: k2(),
        kd1: kd(),
        kd2: kd(),
        damping: DampingMode::default(),
    }
}

/// A validated experiment definition.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub workspace: Workspace,
    pub bvp: BvpSpec,
    pub robot_kind: ModelKind,
    /// True plant parameters.
    pub robot: RobotParams,
    /// Parameters the controller inverts with.
    pub controller_params: RobotParams,
    pub gains: GainSet,
    pub damping: DampingMode,
    pub initial: RobotState,
    pub disturbance: Disturbance,
    pub sim: SimConfig,
    pub solver: SolverConfig,
}

fn parse_error(e: serde_json::Error) -> ScenarioError {
    ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(text).map_err(parse_error)?;
    Scenario::from_doc(doc)
}

/// Applies `key=value` overrides (dotted paths, numeric segments index
/// arrays) to a scenario document and loads the result. Keys must name
/// fields that exist once defaults are filled in.
pub fn load_scenario_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Scenario, ScenarioError> {
    let base = load_scenario(text)?;
    if overrides.is_empty() {
        return Ok(base);
    }
    base.with_overrides(overrides)
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), ScenarioError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ScenarioError::Override {
        key: s.to_string(),
        reason: "expected key=value".into(),
    })?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// JSON literal if it parses as one, otherwise a string.
fn override_value(v: &str) -> Value {
    serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), ScenarioError> {
    let err = |reason: &str| ScenarioError::Override {
        key: key.to_string(),
        reason: reason.to_string(),
    };
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part).ok_or_else(|| err("no such field"))?,
            Value::Array(items) => {
                let i: usize = part.parse().map_err(|_| err("array segment must be an index"))?;
                items.get_mut(i).ok_or_else(|| err("index out of range"))?
            }
            _ => return Err(err("path descends into a scalar")),
        };
    }
    *node = value;
    Ok(())
}

fn map_rows(rows: &[String], width: usize, height: usize, what: &str) -> Result<Vec<Vec<char>>, ScenarioError> {
    if rows.len() != height {
        return Err(ScenarioError::invalid(format!("{what} has {} rows, grid height is {height}", rows.len())));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let chars: Vec<char> = r.chars().collect();
            if chars.len() != width {
                Err(ScenarioError::invalid(format!(
                    "{what} row {i} has {} columns, grid width is {width}",
                    chars.len()
                )))
            } else {
                Ok(chars)
            }
        })
        .collect()
}

/// Reorders a top-row-first array to row 0 = bottom.
fn flip_rows<T: Clone>(top_first: &[T], width: usize, height: usize) -> Vec<T> {
    (0..height)
        .flat_map(|r| top_first[(height - 1 - r) * width..(height - r) * width].iter().cloned())
        .collect()
}

fn finite(v: &[f64], what: &str) -> Result<(), ScenarioError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ScenarioError::invalid(format!("{what} must be finite")))
    }
}

impl Scenario {
    pub fn from_doc(mut doc: ScenarioDoc) -> Result<Scenario, ScenarioError> {
        let g = &mut doc.grid;
        let (w, h) = (g.width, g.height);
        if w == 0 || h == 0 {
            return Err(ScenarioError::invalid("grid dimensions must be positive"));
        }
        let cell_size = match (g.cell_size, g.extent) {
            (Some(c), None) => c,
            (None, Some(e)) => e[0] / w as f64,
            (Some(c), Some(e)) => {
                for (ext, n) in [(e[0], w), (e[1], h)] {
                    if (c * n as f64 - ext).abs() > 1e-9 * ext.abs().max(1.0) {
                        return Err(ScenarioError::invalid("grid.extent disagrees with cell_size"));
                    }
                }
                c
            }
            (None, None) => return Err(ScenarioError::invalid("grid needs cell_size or extent")),
        };
        if let (None, Some(e)) = (g.cell_size, g.extent) {
            if ((e[1] / h as f64) - cell_size).abs() > 1e-9 * cell_size {
                return Err(ScenarioError::invalid("grid.extent must give square cells"));
            }
        }
        g.cell_size = Some(cell_size);
        finite(&g.origin, "grid.origin")?;
        let origin = Vec2::new(g.origin[0], g.origin[1]);

        let mut cells = match &g.rows {
            Some(rows) => {
                let chars = map_rows(rows, w, h, "grid.rows")?;
                let top_first = chars
                    .into_iter()
                    .flatten()
                    .map(|c| match c {
                        '.' => Ok(CellClass::Free),
                        '#' => Ok(CellClass::Obstacle),
                        other => Err(ScenarioError::invalid(format!("grid.rows: unknown cell symbol {other:?}"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                flip_rows(&top_first, w, h)
            }
            None => vec![CellClass::Free; w * h],
        };
        for rect in &g.obstacles {
            finite(&[rect.min[0], rect.min[1], rect.max[0], rect.max[1]], "grid.obstacles")?;
            for (i, c) in cells.iter_mut().enumerate() {
                let p = origin + Vec2::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5) * cell_size;
                if p.x >= rect.min[0] && p.x <= rect.max[0] && p.y >= rect.min[1] && p.y <= rect.max[1] {
                    *c = CellClass::Obstacle;
                }
            }
        }
        let gamma = match &doc.gamma {
            Some(gm) => {
                if gm.len() != w * h {
                    return Err(ScenarioError::invalid(format!("gamma has {} values, grid has {} cells", gm.len(), w * h)));
                }
                Some(flip_rows(gm, w, h))
            }
            None => None,
        };
        let workspace = Workspace::new(w, h, cell_size, origin, cells, gamma)?;

        let b = &doc.bvp;
        finite(&[b.start[0], b.start[1], b.target[0], b.target[1]], "bvp start/target")?;
        let mut bvp = BvpSpec::new(b.kind, Vec2::new(b.start[0], b.start[1]), Vec2::new(b.target[0], b.target[1]));
        bvp.heading = b.heading;
        bvp.epsilon_cells = b.epsilon_cells;
        bvp.sigma_forward = b.sigma_forward;
        bvp.sigma_backward = b.sigma_backward;
        if let Some(rows) = &b.region_rows {
            if b.kind != BvpKind::Directional {
                return Err(ScenarioError::invalid("bvp.region_rows is only valid with the directional kind"));
            }
            let chars = map_rows(rows, w, h, "bvp.region_rows")?;
            let top_first = chars
                .into_iter()
                .flatten()
                .map(|c| match c {
                    '.' => Ok(None),
                    '>' => Ok(Some(Vec2::new(1.0, 0.0))),
                    '<' => Ok(Some(Vec2::new(-1.0, 0.0))),
                    '^' => Ok(Some(Vec2::new(0.0, 1.0))),
                    'v' => Ok(Some(Vec2::new(0.0, -1.0))),
                    other => Err(ScenarioError::invalid(format!("bvp.region_rows: unknown symbol {other:?}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            bvp.directional = Some(DirectionalConstraint {
                field: flip_rows(&top_first, w, h),
            });
        }
        bvp.validate(&workspace)?;

        let rd = &doc.robot;
        let robot = RobotParams {
            r: rd.r,
            w: rd.w,
            l: rd.l,
            m: rd.m,
            i: rd.i,
            phi_max: rd.phi_max,
        };
        robot.validate().map_err(ScenarioError::Validation)?;
        let controller_params = match &rd.model_error {
            Some(me) => RobotParams {
                r: me.r.unwrap_or(robot.r),
                w: me.w.unwrap_or(robot.w),
                l: me.l.unwrap_or(robot.l),
                m: me.m.unwrap_or(robot.m),
                i: me.i.unwrap_or(robot.i),
                phi_max: robot.phi_max,
            },
            None => robot,
        };
        controller_params
            .validate()
            .map_err(|e| ScenarioError::invalid(format!("model_error: {e}")))?;

        doc.controller.gains().validate().map_err(ScenarioError::Validation)?;
        let init = doc.initial;
        if !init.is_finite() {
            return Err(ScenarioError::invalid("initial state must be finite"));
        }
        if !workspace.is_admissible(init.position()) {
            return Err(ScenarioError::invalid("initial position must lie in a free cell"));
        }
        doc.disturbance.validate().map_err(ScenarioError::Validation)?;
        doc.sim.validate().map_err(ScenarioError::Validation)?;
        doc.solver.validate().map_err(ScenarioError::Validation)?;

        Ok(Scenario {
            workspace,
            bvp,
            robot_kind: rd.kind,
            robot,
            controller_params,
            gains: doc.controller.gains(),
            damping: doc.controller.damping,
            initial: init,
            disturbance: doc.disturbance,
            sim: doc.sim,
            solver: doc.solver,
            doc,
        })
    }

    /// The normalized document as JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("scenario documents always serialize")
    }

    /// A copy with dotted-path overrides applied.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Scenario, ScenarioError> {
        let mut value = serde_json::to_value(&self.doc).expect("scenario documents always serialize");
        for (k, v) in overrides {
            set_path(&mut value, k, override_value(v))?;
        }
        let doc: ScenarioDoc = serde_json::from_value(value).map_err(|e| ScenarioError::Override {
            key: overrides.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>().join(","),
            reason: e.to_string(),
        })?;
        Scenario::from_doc(doc)
    }

    pub fn controller(&self) -> Controller {
        Controller {
            gains: self.gains,
            damping: self.damping,
            params: self.controller_params,
        }
    }

    pub fn closed_loop(&self) -> ClosedLoop {
        ClosedLoop {
            plant: Plant {
                kind: self.robot_kind,
                params: self.robot,
            },
            controller: self.controller(),
            disturbance: self.disturbance,
            config: self.sim,
            initial: self.initial,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREE_SPACE: &str = r#"{
        "grid": {"width": 40, "height": 40, "extent": [4.0, 4.0], "origin": [-2.0, -2.0]},
        "bvp": {"kind": "neumann", "start": [-1.9, 1.9], "target": [1.0, 0.0]},
        "robot": {"kind": "fsr_kinematic"},
        "initial": {"x": 0.0, "y": -1.0, "theta": 1.5707963267948966}
    }"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let sc = load_scenario(FREE_SPACE).unwrap();
        assert_eq!(sc.bvp.kind, BvpKind::Neumann);
        assert_eq!(sc.workspace.cell_size(), 0.1);
        assert_eq!(sc.gains, GainSet::default());
        assert_eq!(sc.damping, DampingMode::Selective);
        assert_eq!(sc.sim, SimConfig::default());
        assert_eq!(sc.robot.phi_max, 1.4);
        assert_eq!(sc.controller_params, sc.robot);
    }

    #[test]
    fn round_trip_is_exact() {
        let mut sc = load_scenario(FREE_SPACE).unwrap();
        sc = sc
            .with_overrides(&[("initial.theta".into(), "0.1".into()), ("sim.dt".into(), "0.000123456789".into())])
            .unwrap();
        let again = load_scenario(&sc.to_json()).unwrap();
        assert_eq!(again, sc);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = FREE_SPACE.replace("\"fsr_kinematic\"", "\"fsr_kinematic\", \"wheel\": 2");
        assert!(matches!(load_scenario(&text), Err(ScenarioError::Parse { .. })));
    }

    #[test]
    fn parse_error_has_location() {
        match load_scenario("{\n  \"grid\": [1,\n") {
            Err(ScenarioError::Parse { line, .. }) => assert!(line >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rows_are_top_first() {
        let text = r##"{
            "grid": {"width": 3, "height": 2, "cell_size": 1.0, "rows": ["#..", "..."]},
            "bvp": {"kind": "neumann", "start": [0.5, 0.5], "target": [2.5, 1.5]},
            "robot": {"kind": "ddr_kinematic"},
            "initial": {"x": 1.5, "y": 0.5, "theta": 0.0}
        }"##;
        let sc = load_scenario(text).unwrap();
        assert_eq!(sc.workspace.cell_at(Vec2::new(0.5, 1.5)), CellClass::Obstacle);
        assert_eq!(sc.workspace.cell_at(Vec2::new(0.5, 0.5)), CellClass::Free);
    }

    #[test]
    fn start_in_obstacle_fails_validation() {
        let text = FREE_SPACE.replace(
            "\"origin\": [-2.0, -2.0]}",
            "\"origin\": [-2.0, -2.0], \"obstacles\": [{\"min\": [-2.0, 1.5], \"max\": [-1.5, 2.0]}]}",
        );
        assert!(matches!(load_scenario(&text), Err(ScenarioError::Validation(_))));
    }

    #[test]
    fn gamma_document() {
        let mut gamma = vec![1.0; 16];
        gamma[5] = 0.2;
        let text = format!(
            r#"{{
            "grid": {{"width": 4, "height": 4, "cell_size": 1.0}},
            "gamma": {gamma:?},
            "bvp": {{"kind": "gamma", "start": [0.5, 0.5], "target": [3.5, 3.5]}},
            "robot": {{"kind": "fsr_kinematic"}},
            "initial": {{"x": 0.5, "y": 0.6, "theta": 0.0}}
        }}"#
        );
        let sc = load_scenario(&text).unwrap();
        // top-first index 5 is column 1 of the second row from the top
        let g = sc.workspace.gamma().unwrap();
        assert_eq!(g[sc.workspace.index(1, 2)], 0.2);
        let no_kind = text.replace("\"kind\": \"gamma\"", "\"kind\": \"neumann\"");
        assert!(load_scenario(&no_kind).is_err());
    }

    #[test]
    fn overrides_address_existing_fields_only() {
        let sc = load_scenario(FREE_SPACE).unwrap();
        let o = sc
            .with_overrides(&[
                ("controller.KD1".into(), "0".into()),
                ("robot.kind".into(), "ddr_dynamic".into()),
                ("bvp.start.0".into(), "-1.5".into()),
                ("disturbance.saturation_fraction".into(), "0.5".into()),
            ])
            .unwrap();
        assert_eq!(o.gains.kd1, 0.0);
        assert_eq!(o.robot_kind, ModelKind::DdrDynamic);
        assert_eq!(o.bvp.start.x, -1.5);
        assert_eq!(o.disturbance.saturation_fraction, Some(0.5));
        assert!(matches!(
            sc.with_overrides(&[("controller.K9".into(), "1".into())]),
            Err(ScenarioError::Override { .. })
        ));
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn model_error_only_touches_controller() {
        let text = FREE_SPACE.replace(
            "\"fsr_kinematic\"",
            "\"fsr_kinematic\", \"model_error\": {\"r\": 1.5, \"L\": 0.5}",
        );
        let sc = load_scenario(&text).unwrap();
        assert_eq!(sc.robot.r, 1.0);
        assert_eq!(sc.controller_params.r, 1.5);
        assert_eq!(sc.controller_params.l, 0.5);
        assert_eq!(sc.closed_loop().plant.params.l, 1.0);
    }
}
