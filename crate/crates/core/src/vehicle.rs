//! Vehicle geometry, chassis kinematics and the forward plant.
//!
//! The lead vehicle is a front-steered Ackermann chassis with two driven rear
//! wheels; followers are four-wheel skid-steer chassis that realize an
//! effective steering angle through a left/right wheel-speed difference.
//! Both are integrated with the same kinematic bicycle model, referenced at
//! the rear-axle center.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::wrap_angle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("operation requires a {expected:?} chassis, got {found:?}")]
    WrongChassis {
        expected: ChassisKind,
        found: ChassisKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChassisKind {
    AckermannLead,
    DifferentialFollower,
}

/// Physical parameters of one vehicle.
///
/// `tau_v` and `tau_delta` are the first-order actuator time constants used by
/// [`step_plant`]. Zero disables a lag, `f64::INFINITY` freezes the actuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry {
    pub wheelbase: f64,
    pub track_width: f64,
    pub rear_axle_to_cg: f64,
    pub chassis: ChassisKind,
    pub max_steer: f64,
    pub max_speed: f64,
    pub tau_v: f64,
    pub tau_delta: f64,
}

impl VehicleGeometry {
    pub const DEFAULT_WHEELBASE: f64 = 0.30;
    pub const DEFAULT_TRACK_WIDTH: f64 = 0.25;
    pub const DEFAULT_REAR_AXLE_TO_CG: f64 = 0.15;
    pub const DEFAULT_MAX_STEER: f64 = 0.5;
    pub const DEFAULT_MAX_SPEED: f64 = 0.5;
    pub const DEFAULT_TAU_V: f64 = 0.4;
    pub const DEFAULT_TAU_DELTA: f64 = 0.15;

    pub fn new(chassis: ChassisKind) -> Self {
        VehicleGeometry {
            wheelbase: Self::DEFAULT_WHEELBASE,
            track_width: Self::DEFAULT_TRACK_WIDTH,
            rear_axle_to_cg: Self::DEFAULT_REAR_AXLE_TO_CG,
            chassis,
            max_steer: Self::DEFAULT_MAX_STEER,
            max_speed: Self::DEFAULT_MAX_SPEED,
            tau_v: Self::DEFAULT_TAU_V,
            tau_delta: Self::DEFAULT_TAU_DELTA,
        }
    }

    pub fn lead() -> Self {
        Self::new(ChassisKind::AckermannLead)
    }

    pub fn follower() -> Self {
        Self::new(ChassisKind::DifferentialFollower)
    }

    /// Checks the geometric invariants, returning a description of the first
    /// one violated.
    pub fn validate(&self) -> Result<(), String> {
        let finite = [
            self.wheelbase,
            self.track_width,
            self.rear_axle_to_cg,
            self.max_steer,
            self.max_speed,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err("geometry values must be finite".into());
        }
        if self.wheelbase <= 0.0 {
            return Err(format!("wheelbase must be > 0 (got {})", self.wheelbase));
        }
        if self.track_width <= 0.0 {
            return Err(format!("track_width must be > 0 (got {})", self.track_width));
        }
        if self.rear_axle_to_cg < 0.0 || self.rear_axle_to_cg > self.wheelbase {
            return Err(format!(
                "rear_axle_to_cg must lie in [0, wheelbase] (got {})",
                self.rear_axle_to_cg
            ));
        }
        if !(self.max_steer > 0.0 && self.max_steer < std::f64::consts::FRAC_PI_2) {
            return Err(format!("max_steer must lie in (0, pi/2) (got {})", self.max_steer));
        }
        if self.max_speed <= 0.0 {
            return Err(format!("max_speed must be > 0 (got {})", self.max_speed));
        }
        if self.tau_v.is_nan() || self.tau_v < 0.0 || self.tau_delta.is_nan() || self.tau_delta < 0.0 {
            return Err("actuator time constants must be >= 0".into());
        }
        Ok(())
    }

    fn require(&self, expected: ChassisKind) -> Result<(), KinematicsError> {
        if self.chassis == expected {
            Ok(())
        } else {
            Err(KinematicsError::WrongChassis {
                expected,
                found: self.chassis,
            })
        }
    }

    fn clamp_steer(&self, delta: f64) -> f64 {
        delta.clamp(-self.max_steer, self.max_steer)
    }
}

/// Ground-truth planar state of one vehicle, referenced at the rear axle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Yaw in (-π, π].
    pub psi: f64,
    pub v_actual: f64,
    /// Realized front steering angle; always 0 for skid-steer followers.
    pub delta_actual: f64,
}

impl VehicleState {
    pub fn at(x: f64, y: f64, psi: f64) -> Self {
        VehicleState {
            x,
            y,
            psi: wrap_angle(psi),
            ..Default::default()
        }
    }

    pub fn with_speed(mut self, v: f64) -> Self {
        self.v_actual = v;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.psi.is_finite()
            && self.v_actual.is_finite()
            && self.delta_actual.is_finite()
    }
}

/// High-level chassis command: objective longitudinal speed and steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChassisCommand {
    pub vx_obj: f64,
    pub delta_obj: f64,
}

impl ChassisCommand {
    pub const STOP: ChassisCommand = ChassisCommand {
        vx_obj: 0.0,
        delta_obj: 0.0,
    };

    pub fn new(vx_obj: f64, delta_obj: f64) -> Self {
        ChassisCommand { vx_obj, delta_obj }
    }

    fn check_finite(&self) -> Result<(), KinematicsError> {
        if self.vx_obj.is_finite() && self.delta_obj.is_finite() {
            Ok(())
        } else {
            Err(KinematicsError::InvalidCommand(format!(
                "non-finite command ({}, {})",
                self.vx_obj, self.delta_obj
            )))
        }
    }
}

/// Low-level targets for the lead chassis: rear wheel speeds and the
/// front-left wheel angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckermannActuation {
    pub v_left_obj: f64,
    pub v_right_obj: f64,
    pub delta_left_obj: f64,
}

/// Follower wheel speeds. Wheels 1-2 are the left side, 3-4 the right side.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelSpeeds4 {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
}

impl WheelSpeeds4 {
    fn is_finite(&self) -> bool {
        self.v1.is_finite() && self.v2.is_finite() && self.v3.is_finite() && self.v4.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffSteerOutput {
    pub wheels: WheelSpeeds4,
    /// Set when the steering command exceeded `max_steer` and was clamped.
    pub steer_clamped: bool,
}

/// Body-frame motion estimated from encoder readings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatedMotion {
    pub vx_hat: f64,
    pub vy_hat: f64,
    pub omega_hat: f64,
}

/// Inverse Ackermann kinematics: rear wheel speeds and front-left wheel angle
/// realizing `cmd` on the lead chassis.
pub fn inverse_ackermann(
    cmd: ChassisCommand,
    geom: &VehicleGeometry,
) -> Result<AckermannActuation, KinematicsError> {
    geom.require(ChassisKind::AckermannLead)?;
    cmd.check_finite()?;
    if cmd.delta_obj.abs() > geom.max_steer {
        return Err(KinematicsError::InvalidCommand(format!(
            "steering {} exceeds max_steer {}",
            cmd.delta_obj, geom.max_steer
        )));
    }
    let (l, w) = (geom.wheelbase, geom.track_width);
    let tan_d = cmd.delta_obj.tan();
    let denom = 2.0 * l - w * tan_d;
    if denom <= 0.0 {
        return Err(KinematicsError::DegenerateGeometry(format!(
            "2L - W tan(delta) = {denom} <= 0"
        )));
    }
    let k = w / (2.0 * l) * tan_d;
    Ok(AckermannActuation {
        v_left_obj: cmd.vx_obj * (1.0 - k),
        v_right_obj: cmd.vx_obj * (1.0 + k),
        delta_left_obj: (2.0 * l * tan_d / denom).atan(),
    })
}

/// Front-right wheel angle satisfying the Ackermann condition
/// `cot(δr) - cot(δl) = W/L`.
///
/// Evaluated as `atan(tan δl / (1 + (W/L) tan δl))`, which is the same relation
/// multiplied through by `tan δl tan δr` and is continuous at `δl = 0`.
pub fn ackermann_right_steer(delta_left: f64, geom: &VehicleGeometry) -> f64 {
    let t = delta_left.tan();
    (t / (1.0 + geom.track_width / geom.wheelbase * t)).atan()
}

/// Lead-vehicle motion from rear wheel speeds and the measured front-left angle.
pub fn estimate_lead_motion(
    v_left_meas: f64,
    v_right_meas: f64,
    delta_left_meas: f64,
    geom: &VehicleGeometry,
) -> Result<EstimatedMotion, KinematicsError> {
    geom.require(ChassisKind::AckermannLead)?;
    if !(v_left_meas.is_finite() && v_right_meas.is_finite() && delta_left_meas.is_finite()) {
        return Err(KinematicsError::InvalidCommand(
            "non-finite wheel measurement".into(),
        ));
    }
    let (l, w) = (geom.wheelbase, geom.track_width);
    let vx_hat = 0.5 * (v_left_meas + v_right_meas);
    // L2 / (L cot δ + W/2), rewritten with tan δ so that δ = 0 gives 0.
    let t = delta_left_meas.tan();
    let vy_hat = geom.rear_axle_to_cg * t / (l + 0.5 * w * t) * vx_hat;
    Ok(EstimatedMotion {
        vx_hat,
        vy_hat,
        omega_hat: (v_right_meas - v_left_meas) / w,
    })
}

/// Inverse differential-speed steering: the four wheel speeds producing the
/// same turn as an effective steering angle `cmd.delta_obj`.
pub fn inverse_diff_steer(
    cmd: ChassisCommand,
    geom: &VehicleGeometry,
) -> Result<DiffSteerOutput, KinematicsError> {
    geom.require(ChassisKind::DifferentialFollower)?;
    cmd.check_finite()?;
    let delta = geom.clamp_steer(cmd.delta_obj);
    let k = geom.track_width / (2.0 * geom.wheelbase) * delta.tan();
    let left = cmd.vx_obj * (1.0 - k);
    let right = cmd.vx_obj * (1.0 + k);
    Ok(DiffSteerOutput {
        wheels: WheelSpeeds4 {
            v1: left,
            v2: left,
            v3: right,
            v4: right,
        },
        steer_clamped: delta != cmd.delta_obj,
    })
}

/// Follower motion from the four measured wheel speeds.
pub fn estimate_follower_motion(
    ws: &WheelSpeeds4,
    geom: &VehicleGeometry,
) -> Result<EstimatedMotion, KinematicsError> {
    geom.require(ChassisKind::DifferentialFollower)?;
    if !ws.is_finite() {
        return Err(KinematicsError::InvalidCommand(
            "non-finite wheel measurement".into(),
        ));
    }
    Ok(EstimatedMotion {
        vx_hat: (ws.v1 + ws.v2 + ws.v3 + ws.v4) / 4.0,
        vy_hat: 0.0,
        omega_hat: (-ws.v1 - ws.v2 + ws.v3 + ws.v4) / (2.0 * geom.track_width),
    })
}

fn lag_factor(dt: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        1.0
    } else {
        1.0 - (-dt / tau).exp()
    }
}

/// Steering angle the plant actually applies this step: the lagged servo
/// angle for the lead, the (clamped) command for a skid-steer follower.
pub fn realized_steer(state: &VehicleState, cmd: &ChassisCommand, geom: &VehicleGeometry) -> f64 {
    match geom.chassis {
        ChassisKind::AckermannLead => state.delta_actual,
        ChassisKind::DifferentialFollower => {
            if cmd.delta_obj.is_finite() {
                geom.clamp_steer(cmd.delta_obj)
            } else {
                0.0
            }
        }
    }
}

/// Advances one vehicle by `dt` with explicit Euler on the kinematic bicycle
/// model, then relaxes the actuators toward the clamped command.
///
/// Pose derivatives are evaluated at the state entering the step.
pub fn step_plant(
    state: &VehicleState,
    cmd: &ChassisCommand,
    geom: &VehicleGeometry,
    dt: f64,
) -> VehicleState {
    debug_assert!(dt > 0.0 && dt <= 0.1, "plant step {dt} outside (0, 0.1]");
    let vx_cmd = if cmd.vx_obj.is_finite() {
        cmd.vx_obj.clamp(-geom.max_speed, geom.max_speed)
    } else {
        0.0
    };
    let delta_cmd = if cmd.delta_obj.is_finite() {
        geom.clamp_steer(cmd.delta_obj)
    } else {
        0.0
    };

    let v = state.v_actual;
    let delta = realized_steer(state, cmd, geom);
    let (s, c) = state.psi.sin_cos();

    let mut next = *state;
    next.x += v * c * dt;
    next.y += v * s * dt;
    next.psi = wrap_angle(state.psi + v * delta.tan() / geom.wheelbase * dt);
    next.v_actual += (vx_cmd - v) * lag_factor(dt, geom.tau_v);
    next.delta_actual = match geom.chassis {
        ChassisKind::AckermannLead => {
            state.delta_actual + (delta_cmd - state.delta_actual) * lag_factor(dt, geom.tau_delta)
        }
        ChassisKind::DifferentialFollower => 0.0,
    };
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn lead() -> VehicleGeometry {
        VehicleGeometry::lead()
    }

    fn follower() -> VehicleGeometry {
        VehicleGeometry::follower()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn default_geometry_is_valid() {
        lead().validate().unwrap();
        follower().validate().unwrap();
        let mut g = lead();
        g.rear_axle_to_cg = 0.4;
        assert!(g.validate().is_err());
        g = lead();
        g.max_steer = PI / 2.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn inverse_ackermann_zero_steer_is_identity() {
        let a = inverse_ackermann(ChassisCommand::new(0.2, 0.0), &lead()).unwrap();
        assert_eq!(a.v_left_obj, 0.2);
        assert_eq!(a.v_right_obj, 0.2);
        assert_eq!(a.delta_left_obj, 0.0);
    }

    #[test]
    fn inverse_ackermann_left_turn() {
        let a = inverse_ackermann(ChassisCommand::new(0.2, 0.2), &lead()).unwrap();
        // 30-digit evaluation of the inverse Ackermann relations.
        close(a.v_left_obj, 0.183_107_497_040_944, 1e-12);
        close(a.v_right_obj, 0.216_892_502_959_056, 1e-12);
        close(a.delta_left_obj, 0.217_895_730_090_923, 1e-12);
    }

    #[test]
    fn inverse_ackermann_zero_speed() {
        let a = inverse_ackermann(ChassisCommand::new(0.0, 0.3), &lead()).unwrap();
        assert_eq!(a.v_left_obj, 0.0);
        assert_eq!(a.v_right_obj, 0.0);
        let t = 0.3f64.tan();
        close(a.delta_left_obj, (0.6 * t / (0.6 - 0.25 * t)).atan(), 1e-15);
    }

    #[test]
    fn inverse_ackermann_errors() {
        let g = lead();
        assert!(matches!(
            inverse_ackermann(ChassisCommand::new(f64::NAN, 0.0), &g),
            Err(KinematicsError::InvalidCommand(_))
        ));
        assert!(matches!(
            inverse_ackermann(ChassisCommand::new(0.2, 0.0), &follower()),
            Err(KinematicsError::WrongChassis { .. })
        ));
        // Short wheelbase and wide track make 2L - W tan(δ) vanish inside the steer limit.
        let mut narrow = g;
        narrow.wheelbase = 0.05;
        narrow.track_width = 0.4;
        narrow.rear_axle_to_cg = 0.0;
        assert!(matches!(
            inverse_ackermann(ChassisCommand::new(0.2, 0.45), &narrow),
            Err(KinematicsError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn ackermann_right_steer_examples() {
        let g = lead();
        let dl = (1.0f64 / 2.0).atan(); // cot δl = 2
        close(ackermann_right_steer(dl, &g), 0.339_292_614_454_045, 1e-12);
        assert_eq!(ackermann_right_steer(0.0, &g), 0.0);

        let a = inverse_ackermann(ChassisCommand::new(0.2, 0.2), &g).unwrap();
        let dr = ackermann_right_steer(a.delta_left_obj, &g);
        let residual = 1.0 / dr.tan() - 1.0 / a.delta_left_obj.tan() - g.track_width / g.wheelbase;
        assert!(residual.abs() < 1e-12, "{residual}");
        assert!(ackermann_right_steer(-0.2, &g) < 0.0);
    }

    #[test]
    fn estimate_lead_motion_examples() {
        let g = lead();
        let m = estimate_lead_motion(0.2, 0.2, 0.0, &g).unwrap();
        assert_eq!((m.vx_hat, m.vy_hat, m.omega_hat), (0.2, 0.0, 0.0));

        let a = inverse_ackermann(ChassisCommand::new(0.2, 0.2), &g).unwrap();
        let m = estimate_lead_motion(a.v_left_obj, a.v_right_obj, a.delta_left_obj, &g).unwrap();
        close(m.vx_hat, 0.2, 1e-15);
        close(m.omega_hat, 0.135_140_023_672_448, 1e-12);
        close(m.vy_hat, 0.020_271_003_550_867, 1e-12);

        let m = estimate_lead_motion(0.1, 0.3, 0.1, &g).unwrap();
        close(m.omega_hat, 0.8, 1e-12);
        assert!(estimate_lead_motion(f64::INFINITY, 0.3, 0.1, &g).is_err());
    }

    #[test]
    fn inverse_diff_steer_examples() {
        let g = follower();
        let o = inverse_diff_steer(ChassisCommand::new(0.2, 0.0), &g).unwrap();
        assert_eq!(o.wheels, WheelSpeeds4 { v1: 0.2, v2: 0.2, v3: 0.2, v4: 0.2 });
        assert!(!o.steer_clamped);

        let o = inverse_diff_steer(ChassisCommand::new(0.2, 0.2), &g).unwrap();
        close(o.wheels.v1, 0.183_107_497_040_944, 1e-12);
        assert_eq!(o.wheels.v1, o.wheels.v2);
        close(o.wheels.v3, 0.216_892_502_959_056, 1e-12);
        assert_eq!(o.wheels.v3, o.wheels.v4);

        let o = inverse_diff_steer(ChassisCommand::new(0.0, 0.3), &g).unwrap();
        assert_eq!(o.wheels, WheelSpeeds4::default());

        let o = inverse_diff_steer(ChassisCommand::new(0.2, 0.9), &g).unwrap();
        assert!(o.steer_clamped);
        let at_limit = inverse_diff_steer(ChassisCommand::new(0.2, g.max_steer), &g).unwrap();
        assert_eq!(o.wheels, at_limit.wheels);

        assert!(inverse_diff_steer(ChassisCommand::new(0.2, f64::NAN), &g).is_err());
    }

    #[test]
    fn estimate_follower_motion_examples() {
        let g = follower();
        let m = estimate_follower_motion(&WheelSpeeds4 { v1: 0.2, v2: 0.2, v3: 0.2, v4: 0.2 }, &g)
            .unwrap();
        assert_eq!((m.vx_hat, m.vy_hat, m.omega_hat), (0.2, 0.0, 0.0));

        let ws = WheelSpeeds4 { v1: 0.18656, v2: 0.18656, v3: 0.21344, v4: 0.21344 };
        let m = estimate_follower_motion(&ws, &g).unwrap();
        close(m.vx_hat, 0.2, 1e-15);
        close(m.omega_hat, 0.10752, 1e-12);

        let ws = WheelSpeeds4 { v1: 0.1, v2: 0.1, v3: 0.3, v4: 0.3 };
        let m = estimate_follower_motion(&ws, &g).unwrap();
        close(m.vx_hat, 0.2, 1e-15);
        assert_eq!(m.vy_hat, 0.0);
        // (-0.1 - 0.1 + 0.3 + 0.3) / (2 * 0.25)
        close(m.omega_hat, 0.8, 1e-12);
    }

    #[test]
    fn plant_at_rest_is_unchanged() {
        let s = VehicleState::at(1.0, -2.0, 0.3);
        let n = step_plant(&s, &ChassisCommand::STOP, &lead(), 0.01);
        assert_eq!(s, n);
    }

    #[test]
    fn plant_straight_step() {
        let s = VehicleState::at(0.0, 0.0, 0.0).with_speed(0.2);
        let n = step_plant(&s, &ChassisCommand::new(0.2, 0.0), &lead(), 0.01);
        close(n.x, 0.002, 1e-15);
        assert_eq!(n.y, 0.0);
        assert_eq!(n.psi, 0.0);
        assert_eq!(n.v_actual, 0.2);
    }

    #[test]
    fn plant_yaw_step_with_frozen_servo() {
        let mut g = lead();
        g.tau_delta = f64::INFINITY;
        let s = VehicleState {
            v_actual: 0.2,
            delta_actual: 0.2,
            ..Default::default()
        };
        let n = step_plant(&s, &ChassisCommand::new(0.2, 0.0), &g, 0.01);
        close(n.psi, 0.001_351_400_236_724_48, 1e-15);
        assert_eq!(n.delta_actual, 0.2);
    }

    #[test]
    fn plant_actuator_lags() {
        let g = lead();
        let s = VehicleState::default();
        let n = step_plant(&s, &ChassisCommand::new(0.2, 0.3), &g, 0.005);
        close(n.v_actual, 0.2 * (1.0 - (-0.005f64 / 0.4).exp()), 1e-15);
        close(n.delta_actual, 0.3 * (1.0 - (-0.005f64 / 0.15).exp()), 1e-15);

        let mut instant = g;
        instant.tau_v = 0.0;
        instant.tau_delta = 0.0;
        let n = step_plant(&s, &ChassisCommand::new(0.9, 0.9), &instant, 0.005);
        assert_eq!(n.v_actual, instant.max_speed);
        assert_eq!(n.delta_actual, instant.max_steer);
    }

    #[test]
    fn follower_realizes_steering_immediately() {
        let g = follower();
        let s = VehicleState::default().with_speed(0.2);
        let n = step_plant(&s, &ChassisCommand::new(0.2, 0.2), &g, 0.01);
        close(n.psi, 0.2 * 0.2f64.tan() / 0.3 * 0.01, 1e-15);
        assert_eq!(n.delta_actual, 0.0);
    }
}
