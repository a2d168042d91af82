use serde::{Deserialize, Serialize};

use crate::vehicle::VehicleGeometry;

/// Tracking errors of a follower relative to its predecessor, as produced by
/// the relative-pose sensor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LateralErrors {
    /// Line-of-sight angle from the follower heading to the predecessor.
    pub alpha: f64,
    /// Predecessor heading minus follower heading.
    pub e_psi: f64,
    /// Lateral offset of the predecessor in the follower frame.
    pub e_y: f64,
    /// Follower longitudinal speed.
    pub v_xf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Lookahead {
    /// Constant lookahead distance in meters.
    Fixed { distance: f64 },
    /// Lookahead proportional to follower speed, gain in seconds.
    SpeedScaled { gain: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurePursuitConfig {
    pub lookahead: Lookahead,
    pub min_lookahead: f64,
}

impl Default for PurePursuitConfig {
    fn default() -> Self {
        PurePursuitConfig {
            lookahead: Lookahead::Fixed { distance: 0.3 },
            min_lookahead: 0.05,
        }
    }
}

impl PurePursuitConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match self.lookahead {
            Lookahead::Fixed { distance } => distance > 0.0 && distance.is_finite(),
            Lookahead::SpeedScaled { gain } => gain > 0.0 && gain.is_finite(),
        };
        if !ok {
            return Err(format!("pure pursuit lookahead must be positive ({:?})", self.lookahead));
        }
        if !(self.min_lookahead > 0.0 && self.min_lookahead.is_finite()) {
            return Err(format!(
                "pure pursuit min_lookahead must be > 0 (got {})",
                self.min_lookahead
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StanleyConfig {
    pub ky: f64,
    /// Magnitude of the speed regularization; its sign follows the side of
    /// the crosstrack error.
    pub eps_v: f64,
}

impl Default for StanleyConfig {
    fn default() -> Self {
        StanleyConfig { ky: 0.4, eps_v: 0.001 }
    }
}

impl StanleyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.ky > 0.0 && self.ky.is_finite()) {
            return Err(format!("stanley ky must be > 0 (got {})", self.ky));
        }
        if !(self.eps_v != 0.0 && self.eps_v.is_finite()) {
            return Err(format!("stanley eps_v must be non-zero (got {})", self.eps_v));
        }
        Ok(())
    }
}

/// Lookahead distance for the current follower speed.
pub fn resolve_lookahead(v_xf: f64, cfg: &PurePursuitConfig) -> f64 {
    match cfg.lookahead {
        Lookahead::Fixed { distance } => distance,
        Lookahead::SpeedScaled { gain } => (gain * v_xf.max(0.0)).max(cfg.min_lookahead),
    }
}

/// Pure Pursuit: steer along the arc through the predecessor,
/// `δ = atan(2 L sin α / l_d)`, clamped to the steering limit.
pub fn pure_pursuit_steer(
    err: &LateralErrors,
    cfg: &PurePursuitConfig,
    geom: &VehicleGeometry,
) -> f64 {
    let ld = resolve_lookahead(err.v_xf, cfg);
    let delta = (2.0 * geom.wheelbase * err.alpha.sin() / ld).atan();
    delta.clamp(-geom.max_steer, geom.max_steer)
}

/// Stanley: heading error plus `atan(k_y e_y / (v + ε_v))`, clamped.
///
/// ε_v takes the sign of `e_y` (positive for a leftward correction).
pub fn stanley_steer(err: &LateralErrors, cfg: &StanleyConfig, geom: &VehicleGeometry) -> f64 {
    let eps = if err.e_y >= 0.0 {
        cfg.eps_v.abs()
    } else {
        -cfg.eps_v.abs()
    };
    let crosstrack = if err.e_y == 0.0 {
        0.0
    } else {
        (cfg.ky * err.e_y / (err.v_xf + eps)).atan()
    };
    (err.e_psi + crosstrack).clamp(-geom.max_steer, geom.max_steer)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LateralController {
    PurePursuit(PurePursuitConfig),
    Stanley(StanleyConfig),
}

impl LateralController {
    pub fn steer(&self, err: &LateralErrors, geom: &VehicleGeometry) -> f64 {
        match self {
            LateralController::PurePursuit(cfg) => pure_pursuit_steer(err, cfg, geom),
            LateralController::Stanley(cfg) => stanley_steer(err, cfg, geom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom() -> VehicleGeometry {
        VehicleGeometry::follower()
    }

    fn alpha(a: f64) -> LateralErrors {
        LateralErrors {
            alpha: a,
            v_xf: 0.2,
            ..Default::default()
        }
    }

    #[test]
    fn pure_pursuit_examples() {
        let cfg = PurePursuitConfig::default();
        assert_eq!(pure_pursuit_steer(&alpha(0.0), &cfg, &geom()), 0.0);
        let d = pure_pursuit_steer(&alpha(0.1), &cfg, &geom());
        assert!((d - 0.197_075_186_732_115).abs() < 1e-12, "{d}");
        assert_eq!(pure_pursuit_steer(&alpha(-0.1), &cfg, &geom()), -d);
        assert_eq!(pure_pursuit_steer(&alpha(1.5), &cfg, &geom()), geom().max_steer);
    }

    #[test]
    fn lookahead_modes() {
        let fixed = PurePursuitConfig::default();
        assert_eq!(resolve_lookahead(0.0, &fixed), 0.3);
        assert_eq!(resolve_lookahead(0.45, &fixed), 0.3);
        let scaled = PurePursuitConfig {
            lookahead: Lookahead::SpeedScaled { gain: 1.5 },
            min_lookahead: 0.05,
        };
        assert!((resolve_lookahead(0.2, &scaled) - 0.3).abs() < 1e-15);
        assert_eq!(resolve_lookahead(0.0, &scaled), 0.05);
    }

    #[test]
    fn stanley_examples() {
        let cfg = StanleyConfig::default();
        let g = geom();
        assert_eq!(stanley_steer(&LateralErrors { v_xf: 0.2, ..Default::default() }, &cfg, &g), 0.0);

        let err = LateralErrors {
            alpha: 0.0,
            e_psi: 0.05,
            e_y: 0.1,
            v_xf: 0.2,
        };
        let d = stanley_steer(&err, &cfg, &g);
        assert!((d - 0.246_438_622_342_936).abs() < 1e-12, "{d}");

        let stopped = LateralErrors {
            e_y: 0.1,
            v_xf: 0.0,
            ..Default::default()
        };
        let unclamped = (0.4f64 * 0.1 / 0.001).atan();
        assert!((unclamped - 1.545_801_533_175_976).abs() < 1e-12);
        let d = stanley_steer(&stopped, &cfg, &g);
        assert!(d.is_finite());
        assert_eq!(d, g.max_steer);
    }

    #[test]
    fn stanley_regularization_follows_error_side() {
        let cfg = StanleyConfig { ky: 0.4, eps_v: 0.001 };
        let g = VehicleGeometry { max_steer: 1.5, ..geom() };
        let right = LateralErrors {
            e_y: -0.05,
            v_xf: 0.2,
            ..Default::default()
        };
        let d = stanley_steer(&right, &cfg, &g);
        assert!((d - (0.4f64 * -0.05 / 0.199).atan()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn pure_pursuit_odd_and_monotone(a in 0.0f64..1.5, b in 0.0f64..1.5) {
            let cfg = PurePursuitConfig::default();
            let g = VehicleGeometry { max_steer: 1.5, ..geom() };
            let da = pure_pursuit_steer(&alpha(a), &cfg, &g);
            prop_assert_eq!(pure_pursuit_steer(&alpha(-a), &cfg, &g), -da);
            if b - a > 1e-9 {
                prop_assert!(da < pure_pursuit_steer(&alpha(b), &cfg, &g));
            }
        }

        #[test]
        fn pure_pursuit_gain_falls_with_lookahead(a in 0.01f64..1.5, l1 in 0.05f64..2.0, l2 in 0.05f64..2.0) {
            prop_assume!(l2 - l1 > 1e-6);
            let g = VehicleGeometry { max_steer: 1.5, ..geom() };
            let c1 = PurePursuitConfig { lookahead: Lookahead::Fixed { distance: l1 }, ..Default::default() };
            let c2 = PurePursuitConfig { lookahead: Lookahead::Fixed { distance: l2 }, ..Default::default() };
            prop_assert!(pure_pursuit_steer(&alpha(a), &c1, &g).abs() > pure_pursuit_steer(&alpha(a), &c2, &g).abs());
        }

        #[test]
        fn stanley_crosstrack_term_falls_with_speed(ey in 0.001f64..0.5, v1 in 0.0f64..1.0, v2 in 0.0f64..1.0) {
            prop_assume!(v2 - v1 > 1e-6);
            let cfg = StanleyConfig::default();
            // Limit at π/2 so the clamp never binds on the atan term.
            let g = VehicleGeometry { max_steer: std::f64::consts::FRAC_PI_2, ..geom() };
            let at = |v| stanley_steer(&LateralErrors { e_y: ey, v_xf: v, ..Default::default() }, &cfg, &g);
            prop_assert!(at(v1) > at(v2));
        }

        #[test]
        fn steering_always_within_limits(
            a in -3.2f64..3.2, epsi in -3.2f64..3.2, ey in -3.0f64..3.0, v in 0.0f64..1.0,
        ) {
            let g = geom();
            let err = LateralErrors { alpha: a, e_psi: epsi, e_y: ey, v_xf: v };
            for c in [
                LateralController::PurePursuit(PurePursuitConfig::default()),
                LateralController::Stanley(StanleyConfig::default()),
            ] {
                let d = c.steer(&err, &g);
                prop_assert!(d.abs() <= g.max_steer);
            }
        }
    }
}
