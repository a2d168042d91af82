use serde::{Deserialize, Serialize};

/// Gains and limits of the spacing controller.
///
/// The output is a desired longitudinal speed; `v_min`/`v_max` clamp it and
/// `integral_limit` bounds the accumulated error (anti-windup).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub integral_limit: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        PidConfig {
            kp: 1.5,
            ki: 0.3,
            kd: 0.0,
            v_min: 0.0,
            v_max: 0.5,
            integral_limit: 1.0,
        }
    }
}

impl PidConfig {
    pub fn validate(&self) -> Result<(), String> {
        let all_finite = [self.kp, self.ki, self.kd, self.v_min, self.v_max, self.integral_limit]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err("pid parameters must be finite".into());
        }
        if self.v_min > self.v_max {
            return Err(format!("pid v_min {} > v_max {}", self.v_min, self.v_max));
        }
        if self.integral_limit <= 0.0 {
            return Err(format!("pid integral_limit must be > 0 (got {})", self.integral_limit));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
    pub initialized: bool,
    pub last_output: f64,
    /// Set by the most recent step if its inputs were unusable.
    pub fault: bool,
}

impl PidState {
    /// A state whose integral alone produces `speed`, so a follower that
    /// starts at the goal spacing keeps its initial speed.
    pub fn preloaded(cfg: &PidConfig, speed: f64) -> Self {
        let integral = if cfg.ki != 0.0 {
            (speed / cfg.ki).clamp(-cfg.integral_limit, cfg.integral_limit)
        } else {
            0.0
        };
        PidState {
            integral,
            last_output: speed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidOutput {
    pub e_x: f64,
    /// Unclamped `kp·e + ki·∫e + kd·ė`.
    pub raw: f64,
    pub v_des: f64,
    pub fault: bool,
}

/// One discrete step of the spacing PID.
///
/// Rectangular integration, backward-difference derivative (zero on the first
/// call). Non-finite inputs or a non-positive `dt` leave the state untouched
/// and repeat the previous output with `fault` set.
pub fn pid_step(
    st: &mut PidState,
    cfg: &PidConfig,
    d_measure: f64,
    d_goal: f64,
    dt: f64,
) -> PidOutput {
    if !(d_measure.is_finite() && d_goal.is_finite() && dt.is_finite() && dt > 0.0) {
        st.fault = true;
        return PidOutput {
            e_x: f64::NAN,
            raw: st.last_output,
            v_des: st.last_output,
            fault: true,
        };
    }
    let e_x = d_measure - d_goal;
    st.integral = (st.integral + e_x * dt).clamp(-cfg.integral_limit, cfg.integral_limit);
    let derivative = if st.initialized {
        (e_x - st.prev_error) / dt
    } else {
        0.0
    };
    let raw = cfg.kp * e_x + cfg.ki * st.integral + cfg.kd * derivative;
    let v_des = raw.clamp(cfg.v_min, cfg.v_max);

    st.prev_error = e_x;
    st.initialized = true;
    st.last_output = v_des;
    st.fault = false;
    PidOutput {
        e_x,
        raw,
        v_des,
        fault: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gains(kp: f64, ki: f64, kd: f64) -> PidConfig {
        PidConfig {
            kp,
            ki,
            kd,
            ..Default::default()
        }
    }

    #[test]
    fn zero_error_gives_zero_speed() {
        let mut st = PidState::default();
        let out = pid_step(&mut st, &gains(1.5, 0.3, 0.0), 0.5, 0.5, 1.0 / 30.0);
        assert_eq!(out.v_des, 0.0);
        assert!(st.initialized);
    }

    #[test]
    fn first_call_with_spacing_error() {
        let mut st = PidState::default();
        let out = pid_step(&mut st, &gains(1.5, 0.3, 0.0), 0.6, 0.5, 0.0333);
        let expected = 1.5 * 0.1 + 0.3 * (0.1 * 0.0333);
        assert!((out.v_des - expected).abs() < 1e-12);
        assert!((out.v_des - 0.150_999).abs() < 1e-9);
    }

    #[test]
    fn integral_accumulates_rectangularly() {
        let cfg = gains(0.0, 0.3, 0.0);
        let mut st = PidState::default();
        let mut out = None;
        for _ in 0..10 {
            out = Some(pid_step(&mut st, &cfg, 0.6, 0.5, 0.1));
        }
        assert!((out.unwrap().v_des - 0.03).abs() < 1e-12);
    }

    #[test]
    fn derivative_is_backward_difference() {
        let cfg = PidConfig {
            kp: 0.0,
            ki: 0.0,
            kd: 2.0,
            v_min: -10.0,
            v_max: 10.0,
            integral_limit: 1.0,
        };
        let mut st = PidState::default();
        assert_eq!(pid_step(&mut st, &cfg, 0.6, 0.5, 0.1).raw, 0.0);
        let out = pid_step(&mut st, &cfg, 0.7, 0.5, 0.1);
        assert!((out.raw - 2.0 * (0.2 - 0.1) / 0.1).abs() < 1e-12);
    }

    #[test]
    fn negative_demand_clamps_to_zero() {
        let mut st = PidState::default();
        let out = pid_step(&mut st, &PidConfig::default(), 0.3, 0.5, 0.1);
        assert!(out.raw < 0.0);
        assert_eq!(out.v_des, 0.0);
    }

    #[test]
    fn non_finite_input_holds_previous_output() {
        let cfg = PidConfig::default();
        let mut st = PidState::default();
        let good = pid_step(&mut st, &cfg, 0.6, 0.5, 0.1);
        let before = st;
        let bad = pid_step(&mut st, &cfg, f64::NAN, 0.5, 0.1);
        assert!(bad.fault && st.fault);
        assert_eq!(bad.v_des, good.v_des);
        assert_eq!(st.integral, before.integral);
        let recovered = pid_step(&mut st, &cfg, 0.6, 0.5, 0.1);
        assert!(!recovered.fault && !st.fault);
    }

    #[test]
    fn preload_reproduces_initial_speed() {
        let cfg = PidConfig::default();
        let mut st = PidState::preloaded(&cfg, 0.2);
        let out = pid_step(&mut st, &cfg, 0.5, 0.5, 1.0 / 30.0);
        assert!((out.v_des - 0.2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn integral_never_exceeds_limit(
            errs in proptest::collection::vec(-5.0f64..5.0, 1..200),
            limit in 0.01f64..2.0,
            dt in 0.001f64..0.5,
        ) {
            let cfg = PidConfig { integral_limit: limit, ..Default::default() };
            let mut st = PidState::default();
            for e in errs {
                pid_step(&mut st, &cfg, 0.5 + e, 0.5, dt);
                prop_assert!(st.integral.abs() <= limit);
            }
        }

        #[test]
        fn doubling_gains_doubles_raw_output(
            errs in proptest::collection::vec(-0.5f64..0.5, 2..20),
            kp in 0.0f64..3.0, ki in 0.0f64..1.0, kd in 0.0f64..1.0,
        ) {
            let c1 = PidConfig { kp, ki, kd, v_min: -1e9, v_max: 1e9, integral_limit: 1e9 };
            let c2 = PidConfig { kp: 2.0 * kp, ki: 2.0 * ki, kd: 2.0 * kd, ..c1 };
            let (mut s1, mut s2) = (PidState::default(), PidState::default());
            for e in errs {
                let o1 = pid_step(&mut s1, &c1, 0.5 + e, 0.5, 0.05);
                let o2 = pid_step(&mut s2, &c2, 0.5 + e, 0.5, 0.05);
                // Scaling by two is exact in binary floating point.
                prop_assert_eq!(o2.raw, 2.0 * o1.raw);
            }
        }
    }
}
