//! Fixed-step closed-loop simulation of the predecessor-following platoon.
//!
//! Every controller tick, each follower samples its camera, runs the spacing
//! PID and the selected steering law, and the resulting commands are held
//! while the plants advance by `substeps` steps of `plant_dt`. The lead drives
//! the scripted maneuver or the operator's latest command.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::angle::wrap_angle;
use crate::control::{pid_step, LateralController, LateralErrors, PidState};
use crate::perception::{observe, RelativeObservation};
use crate::scenario::{LateralKind, ManeuverKind, ManeuverSpec, ScenarioError, ScenarioSpec};
use crate::trace::{TraceLog, TraceRecord};
use crate::vehicle::{
    estimate_follower_motion, estimate_lead_motion, inverse_ackermann, inverse_diff_steer,
    ChassisCommand, EstimatedMotion, VehicleGeometry, VehicleState,
};

/// How long a follower keeps acting on its last valid observation before it
/// stops.
pub const LOST_TRACK_HOLD: f64 = 0.5;

/// Gains of the lead's internal path tracker for the lane change.
const LEAD_KY: f64 = 1.0;
const LEAD_EPS_V: f64 = 0.05;

fn lane_change_u(s: f64, start: f64, length: f64) -> f64 {
    ((s - start) / length).clamp(0.0, 1.0)
}

/// Lateral reference of the lane change at traveled distance `s`.
pub fn lane_change_y(s: f64, start: f64, offset: f64, length: f64) -> f64 {
    let u = lane_change_u(s, start, length);
    offset * u * u * (3.0 - 2.0 * u)
}

/// dy/ds of [`lane_change_y`].
pub fn lane_change_slope(s: f64, start: f64, offset: f64, length: f64) -> f64 {
    let u = (s - start) / length;
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        offset * 6.0 * u * (1.0 - u) / length
    }
}

/// Command for the lead vehicle.
///
/// `traveled` is the lead's odometer. For a lane change the reference is
/// tracked at the front axle with a Stanley law. `operator` is the held
/// teleop command and is only used by [`ManeuverKind::Teleop`].
pub fn lead_command(
    maneuver: &ManeuverSpec,
    lead: &VehicleState,
    traveled: f64,
    geom: &VehicleGeometry,
    operator: ChassisCommand,
) -> ChassisCommand {
    match maneuver.kind {
        ManeuverKind::StraightCruise => ChassisCommand::new(maneuver.cruise_speed, 0.0),
        ManeuverKind::Teleop => operator,
        ManeuverKind::LaneChange {
            start_x,
            lateral_offset,
            length,
        } => {
            let l = geom.wheelbase;
            let s_front = traveled + l;
            let y_ref = lane_change_y(s_front, start_x, lateral_offset, length);
            let heading_ref = lane_change_slope(s_front, start_x, lateral_offset, length).atan();
            let e_y = y_ref - (lead.y + l * lead.psi.sin());
            let delta = wrap_angle(heading_ref - lead.psi)
                + (LEAD_KY * e_y / (lead.v_actual + LEAD_EPS_V)).atan();
            ChassisCommand::new(
                maneuver.cruise_speed,
                delta.clamp(-geom.max_steer, geom.max_steer),
            )
        }
    }
}

/// Per-vehicle state broadcast in realtime mode.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSnapshot {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    /// Steering angle commanded on the most recent tick.
    pub delta: f64,
    pub d_measure: f64,
    pub obs_valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub vehicles: Vec<VehicleSnapshot>,
}

#[derive(Debug, Clone)]
struct Agent {
    id: String,
    geom: VehicleGeometry,
    state: VehicleState,
    pid: PidState,
    /// Most recent camera sample, valid or not.
    obs: RelativeObservation,
    last_valid: Option<RelativeObservation>,
    last_sample: Option<u64>,
    rng: ChaCha8Rng,
    traveled: f64,
    cmd: ChassisCommand,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    spec: ScenarioSpec,
    lateral: LateralController,
    agents: Vec<Agent>,
    tick: u64,
    operator: ChassisCommand,
}

impl Simulation {
    pub fn new(spec: ScenarioSpec) -> Result<Self, ScenarioError> {
        spec.validate()?;
        let lateral = match spec.lateral {
            LateralKind::PurePursuit => LateralController::PurePursuit(spec.pure_pursuit),
            LateralKind::Stanley => LateralController::Stanley(spec.stanley),
        };
        let mut sim = Simulation {
            spec,
            lateral,
            agents: Vec::new(),
            tick: 0,
            operator: ChassisCommand::STOP,
        };
        sim.reset();
        Ok(sim)
    }

    /// Restores initial poses, controller states and random streams.
    pub fn reset(&mut self) {
        let spec = &self.spec;
        self.agents = spec
            .vehicles
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(i as u64);
                Agent {
                    id: v.id.clone(),
                    geom: v.geometry,
                    state: v.initial,
                    pid: PidState::preloaded(&spec.pid, v.initial.v_actual),
                    obs: RelativeObservation::default(),
                    last_valid: None,
                    last_sample: None,
                    rng,
                    traveled: 0.0,
                    cmd: ChassisCommand::STOP,
                }
            })
            .collect();
        self.tick = 0;
        self.operator = ChassisCommand::STOP;
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    /// Simulation time of the next tick.
    pub fn time(&self) -> f64 {
        self.tick as f64 / self.spec.controller_rate
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn state(&self, vehicle: usize) -> &VehicleState {
        &self.agents[vehicle].state
    }

    /// Overwrites a vehicle's ground-truth state (disturbance injection).
    pub fn set_state(&mut self, vehicle: usize, state: VehicleState) {
        self.agents[vehicle].state = state;
    }

    pub fn command(&self, vehicle: usize) -> ChassisCommand {
        self.agents[vehicle].cmd
    }

    pub fn set_operator_command(&mut self, cmd: ChassisCommand) {
        self.operator = cmd;
    }

    pub fn operator_command(&self) -> ChassisCommand {
        self.operator
    }

    fn camera_due(&self, agent: &Agent, t: f64) -> Option<u64> {
        let index = (t * self.spec.camera.rate + 1e-9).floor() as u64;
        match agent.last_sample {
            Some(prev) if index <= prev => None,
            _ => Some(index),
        }
    }

    fn follower_command(&mut self, i: usize, t: f64) -> ChassisCommand {
        let predecessor = self.agents[i - 1].state;
        if let Some(index) = self.camera_due(&self.agents[i], t) {
            let cam = self.spec.camera;
            let a = &mut self.agents[i];
            a.obs = observe(&a.state, &predecessor, &cam, t, &mut a.rng);
            a.last_sample = Some(index);
            if a.obs.valid {
                a.last_valid = Some(a.obs);
            }
        }
        let dt = 1.0 / self.spec.controller_rate;
        let (pid_cfg, d_goal, lateral) = (self.spec.pid, self.spec.d_goal, self.lateral);
        let a = &mut self.agents[i];
        let held = a
            .last_valid
            .filter(|o| t - o.stamp <= LOST_TRACK_HOLD + 1e-9);
        let Some(o) = held else {
            return ChassisCommand::STOP;
        };
        let v_des = pid_step(&mut a.pid, &pid_cfg, o.d_measure, d_goal, dt).v_des;
        let errors = LateralErrors {
            alpha: o.alpha,
            e_psi: o.e_psi,
            e_y: o.e_y,
            v_xf: estimate(a).vx_hat,
        };
        ChassisCommand::new(v_des, lateral.steer(&errors, &a.geom))
    }

    /// Runs one controller tick and returns the trace rows recorded at its
    /// start (state before the plant advances).
    pub fn tick(&mut self) -> Vec<TraceRecord> {
        let t = self.time();
        let mut cmds = Vec::with_capacity(self.agents.len());
        let lead = &self.agents[0];
        cmds.push(lead_command(
            &self.spec.maneuver,
            &lead.state,
            lead.traveled,
            &lead.geom,
            self.operator,
        ));
        for i in 1..self.agents.len() {
            cmds.push(self.follower_command(i, t));
        }

        let records = self
            .agents
            .iter()
            .zip(&cmds)
            .enumerate()
            .map(|(i, (a, cmd))| {
                let est = estimate(a);
                let o = if i == 0 {
                    RelativeObservation::default()
                } else {
                    a.obs
                };
                TraceRecord {
                    t,
                    vehicle_id: a.id.clone(),
                    x: a.state.x,
                    y: a.state.y,
                    psi: a.state.psi,
                    v_actual: a.state.v_actual,
                    vx_cmd: cmd.vx_obj,
                    delta_cmd: cmd.delta_obj,
                    vx_hat: est.vx_hat,
                    vy_hat: est.vy_hat,
                    omega_hat: est.omega_hat,
                    d_measure: o.d_measure,
                    alpha: o.alpha,
                    e_psi: o.e_psi,
                    e_y: o.e_y,
                    obs_valid: o.valid,
                }
            })
            .collect();

        let dt = self.spec.plant_dt;
        for (a, cmd) in self.agents.iter_mut().zip(cmds) {
            a.cmd = cmd;
            for _ in 0..self.spec.substeps() {
                a.traveled += a.state.v_actual.abs() * dt;
                a.state = crate::vehicle::step_plant(&a.state, &cmd, &a.geom, dt);
            }
        }
        self.tick += 1;
        records
    }

    /// Advances one tick for realtime use. `operator` replaces the held
    /// operator command when present.
    pub fn step_realtime(&mut self, operator: Option<ChassisCommand>) -> Snapshot {
        if let Some(cmd) = operator {
            self.operator = cmd;
        }
        self.tick();
        self.snapshot()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.time(),
            vehicles: self
                .agents
                .iter()
                .enumerate()
                .map(|(i, a)| VehicleSnapshot {
                    id: a.id.clone(),
                    x: a.state.x,
                    y: a.state.y,
                    psi: a.state.psi,
                    v: a.state.v_actual,
                    delta: a.cmd.delta_obj,
                    d_measure: if i == 0 { 0.0 } else { a.obs.d_measure },
                    obs_valid: i != 0 && a.obs.valid,
                })
                .collect(),
        }
    }
}

/// Body-frame motion reconstructed from the wheel speeds the chassis is
/// currently producing.
fn estimate(a: &Agent) -> EstimatedMotion {
    let v = a.state.v_actual;
    let est = match a.geom.chassis {
        crate::vehicle::ChassisKind::AckermannLead => {
            inverse_ackermann(ChassisCommand::new(v, a.state.delta_actual), &a.geom).and_then(
                |w| estimate_lead_motion(w.v_left_obj, w.v_right_obj, w.delta_left_obj, &a.geom),
            )
        }
        crate::vehicle::ChassisKind::DifferentialFollower => {
            inverse_diff_steer(ChassisCommand::new(v, a.cmd.delta_obj), &a.geom)
                .and_then(|o| estimate_follower_motion(&o.wheels, &a.geom))
        }
    };
    est.unwrap_or(EstimatedMotion {
        vx_hat: v,
        ..Default::default()
    })
}

/// Runs a scenario from t = 0 to its duration, one record per vehicle per
/// controller tick.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<TraceLog, ScenarioError> {
    let mut sim = Simulation::new(spec.clone())?;
    let n = spec.ticks();
    let mut records = Vec::with_capacity((n as usize + 1) * spec.vehicles.len());
    for _ in 0..=n {
        records.extend(sim.tick());
    }
    Ok(TraceLog {
        scenario: spec.clone(),
        records,
    })
}
