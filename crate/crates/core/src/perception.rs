//! Geometric stand-in for the marker camera and the body IMU.
//!
//! The follower camera sees a marker on the predecessor's rear-axle center.
//! The relative vector is expressed in the follower body frame (x forward,
//! y left), corrupted with Gaussian noise, and gated on range, field of view
//! and random dropout.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::angle::wrap_angle;
use crate::vehicle::{VehicleGeometry, VehicleState};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    /// Horizontal field of view (radians).
    pub hfov: f64,
    pub range_min: f64,
    pub range_max: f64,
    /// Frame rate (Hz).
    pub rate: f64,
    pub noise_sigma_pos: f64,
    pub noise_sigma_ang: f64,
    pub dropout_prob: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            hfov: 63.1f64.to_radians(),
            range_min: 0.2,
            range_max: 2.5,
            rate: 30.0,
            noise_sigma_pos: 0.005,
            noise_sigma_ang: 0.01,
            dropout_prob: 0.0,
        }
    }
}

impl CameraModel {
    pub fn noiseless() -> Self {
        CameraModel {
            noise_sigma_pos: 0.0,
            noise_sigma_ang: 0.0,
            dropout_prob: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.hfov > 0.0 && self.hfov < std::f64::consts::PI) {
            return Err(format!("camera hfov must lie in (0, pi) (got {})", self.hfov));
        }
        if !(self.range_min > 0.0 && self.range_min < self.range_max && self.range_max.is_finite()) {
            return Err(format!(
                "camera range must satisfy 0 < range_min < range_max (got {}..{})",
                self.range_min, self.range_max
            ));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(format!("camera rate must be > 0 (got {})", self.rate));
        }
        if !(self.noise_sigma_pos >= 0.0 && self.noise_sigma_ang >= 0.0) {
            return Err("camera noise sigmas must be >= 0".into());
        }
        if !(self.dropout_prob >= 0.0 && self.dropout_prob < 1.0) {
            return Err(format!("camera dropout_prob must lie in [0, 1) (got {})", self.dropout_prob));
        }
        Ok(())
    }

    fn sees(&self, d: f64, alpha: f64) -> bool {
        d >= self.range_min && d <= self.range_max && alpha.abs() <= 0.5 * self.hfov
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelativeObservation {
    pub d_measure: f64,
    pub alpha: f64,
    pub e_psi: f64,
    pub e_y: f64,
    pub stamp: f64,
    pub valid: bool,
}

/// Noise-free relative pose of `predecessor` seen from `own`:
/// `(longitudinal, lateral, heading error)` in the follower body frame.
pub fn relative_pose(own: &VehicleState, predecessor: &VehicleState) -> (f64, f64, f64) {
    let (dx, dy) = (predecessor.x - own.x, predecessor.y - own.y);
    let (s, c) = own.psi.sin_cos();
    let lon = c * dx + s * dy;
    let lat = -s * dx + c * dy;
    (lon, lat, wrap_angle(predecessor.psi - own.psi))
}

/// Samples the camera once.
///
/// Four random draws are consumed on every call regardless of the noise
/// settings, so the random stream stays aligned between configurations.
/// An observation is valid only if both the true and the noisy geometry pass
/// the range and field-of-view gates and the frame is not dropped.
pub fn observe<R: Rng + ?Sized>(
    own: &VehicleState,
    predecessor: &VehicleState,
    cam: &CameraModel,
    t: f64,
    rng: &mut R,
) -> RelativeObservation {
    let (lon, lat, e_psi) = relative_pose(own, predecessor);
    let true_d = lon.hypot(lat);
    let true_alpha = lat.atan2(lon);

    let n_lon: f64 = rng.sample(StandardNormal);
    let n_lat: f64 = rng.sample(StandardNormal);
    let n_psi: f64 = rng.sample(StandardNormal);
    let u_drop: f64 = rng.random();

    let lon_m = lon + cam.noise_sigma_pos * n_lon;
    let lat_m = lat + cam.noise_sigma_pos * n_lat;
    let d_measure = lon_m.hypot(lat_m);
    let alpha = lat_m.atan2(lon_m);
    let e_psi = wrap_angle(e_psi + cam.noise_sigma_ang * n_psi);

    let valid = cam.sees(true_d, true_alpha) && cam.sees(d_measure, alpha) && u_drop >= cam.dropout_prob;
    RelativeObservation {
        d_measure,
        alpha,
        e_psi,
        e_y: lat_m,
        stamp: t,
        valid,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuSample {
    pub ax_hat: f64,
    pub ay_hat: f64,
    pub az_hat: f64,
    pub omega_hat: f64,
    pub roll_rate_hat: f64,
    pub pitch_rate_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuNoise {
    pub accel_sigma: f64,
    pub gyro_sigma: f64,
}

impl ImuNoise {
    pub fn apply<R: Rng + ?Sized>(&self, sample: &ImuSample, rng: &mut R) -> ImuSample {
        let mut n = |sigma: f64| sigma * rng.sample::<f64, _>(StandardNormal);
        ImuSample {
            ax_hat: sample.ax_hat + n(self.accel_sigma),
            ay_hat: sample.ay_hat + n(self.accel_sigma),
            az_hat: sample.az_hat + n(self.accel_sigma),
            omega_hat: sample.omega_hat + n(self.gyro_sigma),
            roll_rate_hat: sample.roll_rate_hat + n(self.gyro_sigma),
            pitch_rate_hat: sample.pitch_rate_hat + n(self.gyro_sigma),
        }
    }
}

/// Ideal planar IMU reading. `steer` is the steering angle the chassis is
/// realizing (the servo angle for the lead, the effective angle for a
/// skid-steer follower).
pub fn simulate_imu(state: &VehicleState, steer: f64, v_dot: f64, geom: &VehicleGeometry) -> ImuSample {
    let omega = state.v_actual * steer.tan() / geom.wheelbase;
    ImuSample {
        ax_hat: v_dot,
        ay_hat: state.v_actual * omega,
        az_hat: GRAVITY,
        omega_hat: omega,
        roll_rate_hat: 0.0,
        pitch_rate_hat: 0.0,
    }
}
