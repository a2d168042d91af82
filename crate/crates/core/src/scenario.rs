//! Declarative scenario documents (TOML) and their validated form.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{PidConfig, PurePursuitConfig, StanleyConfig};
use crate::perception::CameraModel;
use crate::vehicle::{ChassisKind, VehicleGeometry, VehicleState};

pub const LANE_CHANGE_PP: &str = include_str!("../scenarios/lane_change_pp.toml");
pub const LANE_CHANGE_STANLEY: &str = include_str!("../scenarios/lane_change_stanley.toml");
pub const TELEOP: &str = include_str!("../scenarios/teleop.toml");

/// Built-in scenarios addressable by name.
pub const BUILTIN: &[(&str, &str)] = &[
    ("lane_change_pp", LANE_CHANGE_PP),
    ("lane_change_stanley", LANE_CHANGE_STANLEY),
    ("teleop", TELEOP),
];

/// Default heading of each follower at t = 0 when a document omits `vehicles`.
pub const DEFAULT_FOLLOWER_PSI: [f64; 2] = [-0.35, -0.06];
pub const DEFAULT_INITIAL_SPEED: f64 = 0.2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LateralKind {
    PurePursuit,
    Stanley,
}

impl LateralKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LateralKind::PurePursuit => "pure_pursuit",
            LateralKind::Stanley => "stanley",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ManeuverKind {
    LaneChange {
        start_x: f64,
        lateral_offset: f64,
        length: f64,
    },
    Teleop,
    StraightCruise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManeuverSpec {
    pub kind: ManeuverKind,
    pub cruise_speed: f64,
}

impl ManeuverSpec {
    pub const DEFAULT_START_X: f64 = 2.0;
    pub const DEFAULT_LATERAL_OFFSET: f64 = 0.9;
    pub const DEFAULT_LENGTH: f64 = 2.0;
    pub const DEFAULT_CRUISE_SPEED: f64 = 0.2;

    pub fn lane_change() -> Self {
        ManeuverSpec {
            kind: ManeuverKind::LaneChange {
                start_x: Self::DEFAULT_START_X,
                lateral_offset: Self::DEFAULT_LATERAL_OFFSET,
                length: Self::DEFAULT_LENGTH,
            },
            cruise_speed: Self::DEFAULT_CRUISE_SPEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerInfo {
    pub id: u32,
    /// Side length in meters.
    pub size: f64,
}

impl Default for MarkerInfo {
    fn default() -> Self {
        MarkerInfo { id: 582, size: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub id: String,
    pub geometry: VehicleGeometry,
    pub initial: VehicleState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub vehicles: Vec<VehicleSpec>,
    pub lateral: LateralKind,
    pub pure_pursuit: PurePursuitConfig,
    pub stanley: StanleyConfig,
    pub pid: PidConfig,
    pub d_goal: f64,
    pub camera: CameraModel,
    pub marker: MarkerInfo,
    pub maneuver: ManeuverSpec,
    pub duration: f64,
    pub plant_dt: f64,
    pub controller_rate: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Plant sub-steps per controller tick.
    pub fn substeps(&self) -> usize {
        (1.0 / (self.controller_rate * self.plant_dt)).round() as usize
    }

    /// Index of the last controller tick; the run covers ticks `0..=ticks()`.
    pub fn ticks(&self) -> u64 {
        (self.duration * self.controller_rate).round() as u64
    }

    pub fn with_lateral(mut self, lateral: LateralKind) -> Self {
        self.lateral = lateral;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |m: String| Err(ScenarioError::Validation(m));
        if self.vehicles.len() < 2 {
            return fail(format!("at least 2 vehicles required (got {})", self.vehicles.len()));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            let expected = if i == 0 {
                ChassisKind::AckermannLead
            } else {
                ChassisKind::DifferentialFollower
            };
            if v.geometry.chassis != expected {
                return fail(format!(
                    "vehicle {} ('{}') must be {:?}, the first vehicle is the lead and the rest follow",
                    i, v.id, expected
                ));
            }
            if v.id.is_empty() {
                return fail(format!("vehicle {i} has an empty id"));
            }
            if self.vehicles[..i].iter().any(|o| o.id == v.id) {
                return fail(format!("duplicate vehicle id '{}'", v.id));
            }
            v.geometry
                .validate()
                .or_else(|m| fail(format!("vehicle '{}': {m}", v.id)))?;
            if !v.initial.is_finite() {
                return fail(format!("vehicle '{}': initial state must be finite", v.id));
            }
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return fail(format!("duration must be > 0 (got {})", self.duration));
        }
        if !(self.controller_rate > 0.0 && self.controller_rate.is_finite()) {
            return fail(format!("controller_rate must be > 0 (got {})", self.controller_rate));
        }
        if !(self.plant_dt > 0.0 && self.plant_dt <= 0.1) {
            return fail(format!("plant_dt must lie in (0, 0.1] (got {})", self.plant_dt));
        }
        let ratio = 1.0 / (self.controller_rate * self.plant_dt);
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return fail(format!(
                "plant_dt {} does not divide the controller period 1/{} into an integer number of steps ({ratio:.6})",
                self.plant_dt, self.controller_rate
            ));
        }
        if !(self.d_goal > 0.0 && self.d_goal.is_finite()) {
            return fail(format!("d_goal must be > 0 (got {})", self.d_goal));
        }
        self.pid.validate().or_else(fail)?;
        self.pure_pursuit.validate().or_else(fail)?;
        self.stanley.validate().or_else(fail)?;
        self.camera.validate().or_else(fail)?;
        if !self.maneuver.cruise_speed.is_finite() {
            return fail("maneuver cruise_speed must be finite".into());
        }
        if let ManeuverKind::LaneChange {
            start_x,
            lateral_offset,
            length,
        } = self.maneuver.kind
        {
            if !(start_x.is_finite() && lateral_offset.is_finite()) {
                return fail("lane change start_x and lateral_offset must be finite".into());
            }
            if !(length > 0.0 && length.is_finite()) {
                return fail(format!("lane change length must be > 0 (got {length})"));
            }
        }
        Ok(())
    }
}

// ---- document layout ----

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    name: Option<String>,
    #[serde(default)]
    sim: SimSection,
    vehicles: Option<Vec<VehicleEntry>>,
    #[serde(default)]
    controllers: ControllersSection,
    #[serde(default)]
    camera: CameraModel,
    #[serde(default)]
    marker: MarkerInfo,
    #[serde(default)]
    maneuver: ManeuverSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimSection {
    duration: f64,
    plant_dt: f64,
    controller_rate: f64,
    seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            duration: 50.0,
            plant_dt: 1.0 / 210.0,
            controller_rate: 30.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehicleEntry {
    id: String,
    kind: ChassisKind,
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
    #[serde(default)]
    psi: f64,
    #[serde(default)]
    speed: f64,
    #[serde(default)]
    geometry: GeometryOverride,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryOverride {
    wheelbase: Option<f64>,
    track_width: Option<f64>,
    rear_axle_to_cg: Option<f64>,
    max_steer: Option<f64>,
    max_speed: Option<f64>,
    tau_v: Option<f64>,
    tau_delta: Option<f64>,
}

impl GeometryOverride {
    fn apply(&self, mut g: VehicleGeometry) -> VehicleGeometry {
        let set = |dst: &mut f64, src: Option<f64>| {
            if let Some(v) = src {
                *dst = v;
            }
        };
        set(&mut g.wheelbase, self.wheelbase);
        set(&mut g.track_width, self.track_width);
        set(&mut g.rear_axle_to_cg, self.rear_axle_to_cg);
        set(&mut g.max_steer, self.max_steer);
        set(&mut g.max_speed, self.max_speed);
        set(&mut g.tau_v, self.tau_v);
        set(&mut g.tau_delta, self.tau_delta);
        g
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ControllersSection {
    lateral: LateralKind,
    d_goal: f64,
    pid: PidConfig,
    pure_pursuit: PurePursuitConfig,
    stanley: StanleyConfig,
}

impl Default for ControllersSection {
    fn default() -> Self {
        ControllersSection {
            lateral: LateralKind::PurePursuit,
            d_goal: 0.5,
            pid: PidConfig::default(),
            pure_pursuit: PurePursuitConfig::default(),
            stanley: StanleyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ManeuverTag {
    LaneChange,
    Teleop,
    StraightCruise,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManeuverSection {
    kind: ManeuverTag,
    start_x: Option<f64>,
    lateral_offset: Option<f64>,
    length: Option<f64>,
    cruise_speed: Option<f64>,
}

impl Default for ManeuverSection {
    fn default() -> Self {
        ManeuverSection {
            kind: ManeuverTag::LaneChange,
            start_x: None,
            lateral_offset: None,
            length: None,
            cruise_speed: None,
        }
    }
}

impl ManeuverSection {
    fn resolve(&self) -> Result<ManeuverSpec, ScenarioError> {
        let kind = match self.kind {
            ManeuverTag::LaneChange => ManeuverKind::LaneChange {
                start_x: self.start_x.unwrap_or(ManeuverSpec::DEFAULT_START_X),
                lateral_offset: self.lateral_offset.unwrap_or(ManeuverSpec::DEFAULT_LATERAL_OFFSET),
                length: self.length.unwrap_or(ManeuverSpec::DEFAULT_LENGTH),
            },
            other => {
                if self.start_x.is_some() || self.lateral_offset.is_some() || self.length.is_some() {
                    return Err(ScenarioError::Validation(format!(
                        "maneuver {other:?} takes no start_x/lateral_offset/length"
                    )));
                }
                match other {
                    ManeuverTag::Teleop => ManeuverKind::Teleop,
                    _ => ManeuverKind::StraightCruise,
                }
            }
        };
        Ok(ManeuverSpec {
            kind,
            cruise_speed: self.cruise_speed.unwrap_or(ManeuverSpec::DEFAULT_CRUISE_SPEED),
        })
    }
}

fn default_vehicles(d_goal: f64) -> Vec<VehicleSpec> {
    let lead = VehicleSpec {
        id: "lead".into(),
        geometry: VehicleGeometry::lead(),
        initial: VehicleState::at(2.0 * d_goal, 0.0, 0.0).with_speed(DEFAULT_INITIAL_SPEED),
    };
    let followers = DEFAULT_FOLLOWER_PSI.iter().enumerate().map(|(i, &psi)| VehicleSpec {
        id: format!("f{}", i + 1),
        geometry: VehicleGeometry::follower(),
        initial: VehicleState::at(d_goal * (1 - i as i32) as f64, 0.0, psi).with_speed(DEFAULT_INITIAL_SPEED),
    });
    std::iter::once(lead).chain(followers).collect()
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and validates a scenario document, filling defaults.
pub fn parse_scenario(text: &str, name: &str) -> Result<ScenarioSpec, ScenarioError> {
    let doc: Document = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ScenarioError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let c = &doc.controllers;
    let vehicles = match &doc.vehicles {
        None => default_vehicles(c.d_goal),
        Some(entries) => entries
            .iter()
            .map(|e| VehicleSpec {
                id: e.id.clone(),
                geometry: e.geometry.apply(VehicleGeometry::new(e.kind)),
                initial: VehicleState::at(e.x, e.y, e.psi).with_speed(e.speed),
            })
            .collect(),
    };
    let spec = ScenarioSpec {
        name: doc.name.clone().unwrap_or_else(|| name.to_string()),
        vehicles,
        lateral: c.lateral,
        pure_pursuit: c.pure_pursuit,
        stanley: c.stanley,
        pid: c.pid,
        d_goal: c.d_goal,
        camera: doc.camera,
        marker: doc.marker,
        maneuver: doc.maneuver.resolve()?,
        duration: doc.sim.duration,
        plant_dt: doc.sim.plant_dt,
        controller_rate: doc.sim.controller_rate,
        seed: doc.sim.seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// Resolves `name_or_path` to a built-in scenario name or a file on disk.
pub fn load_scenario(name_or_path: &str) -> Result<ScenarioSpec, ScenarioError> {
    if let Some((name, text)) = BUILTIN.iter().find(|(n, _)| *n == name_or_path) {
        return parse_scenario(text, name);
    }
    let path = Path::new(name_or_path);
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: name_or_path.to_string(),
        source,
    })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    parse_scenario(&text, stem)
}
