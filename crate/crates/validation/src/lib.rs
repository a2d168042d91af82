//! Independent reference evaluations used to cross-check the simulator.
//!
//! Everything here is written directly from the control and kinematic laws,
//! without calling into the implementations under test, so agreement between
//! the two is meaningful.

use platoon_core::trace::TraceRecord;

/// Spacing PID over a whole error sequence: returns the clamped output after
/// each sample.
pub fn pid_reference(
    errors: &[f64],
    (kp, ki, kd): (f64, f64, f64),
    dt: f64,
    integral_limit: f64,
    (lo, hi): (f64, f64),
) -> Vec<f64> {
    let mut integral = 0.0f64;
    let mut out = Vec::with_capacity(errors.len());
    for (k, &e) in errors.iter().enumerate() {
        integral += e * dt;
        if integral > integral_limit {
            integral = integral_limit;
        }
        if integral < -integral_limit {
            integral = -integral_limit;
        }
        let de = if k == 0 { 0.0 } else { (e - errors[k - 1]) / dt };
        let u = kp * e + ki * integral + kd * de;
        out.push(if u < lo { lo } else if u > hi { hi } else { u });
    }
    out
}

fn saturate(v: f64, limit: f64) -> f64 {
    if v > limit {
        limit
    } else if v < -limit {
        -limit
    } else {
        v
    }
}

/// Curvature of the arc through the target, times the wheelbase.
pub fn pure_pursuit_reference(alpha: f64, wheelbase: f64, lookahead: f64, max_steer: f64) -> f64 {
    let kappa = 2.0 * alpha.sin() / lookahead;
    saturate((wheelbase * kappa).atan(), max_steer)
}

/// Heading term plus crosstrack term, with the regularizer on the side of
/// the error.
pub fn stanley_reference(e_psi: f64, e_y: f64, v: f64, ky: f64, eps: f64, max_steer: f64) -> f64 {
    let crosstrack = if e_y > 0.0 {
        (ky * e_y / (v + eps.abs())).atan()
    } else if e_y < 0.0 {
        -(ky * -e_y / (v - eps.abs())).atan()
    } else {
        0.0
    };
    saturate(e_psi + crosstrack, max_steer)
}

/// Largest and smallest value of `f` over one vehicle's rows, by a plain
/// linear scan of the whole record list.
pub fn scan_extrema(records: &[TraceRecord], id: &str, f: impl Fn(&TraceRecord) -> f64) -> (f64, f64) {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for r in records {
        if r.vehicle_id == id {
            let v = f(r);
            if v > hi {
                hi = v;
            }
            if v < lo {
                lo = v;
            }
        }
    }
    (hi, lo)
}

/// Ratio of peak magnitudes, follower over lead.
pub fn scan_amplification(
    records: &[TraceRecord],
    lead: &str,
    follower: &str,
    f: impl Fn(&TraceRecord) -> f64 + Copy,
) -> f64 {
    let (lead_peak, _) = scan_extrema(records, lead, f);
    let (follower_peak, _) = scan_extrema(records, follower, f);
    follower_peak.abs() / lead_peak.abs()
}

/// Prints one acceptance line and returns `pass`.
pub fn report(criterion: &str, pass: bool, detail: &str) -> bool {
    println!(
        "ACCEPTANCE {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}
