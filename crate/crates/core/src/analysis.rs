//! Summary metrics of a platoon trace and controller comparisons.
//!
//! The lateral-velocity signal is the world-frame lateral speed
//! `v_actual · sin(psi)` of each vehicle; the yaw signal is `psi`.

use std::fmt::Write as _;
use std::io::Write;

use thiserror::Error;

use crate::numfmt::sig9;
use crate::scenario::ManeuverKind;
use crate::trace::{TraceLog, TraceRecord};

/// Fraction of the run, at the end, averaged for steady-state position.
pub const STEADY_STATE_FRACTION: f64 = 0.10;
/// Speed band around the cruise speed used for convergence.
pub const SPEED_BAND: f64 = 0.03;
/// How long the speed must stay in band to count as converged.
pub const SUSTAIN_TIME: f64 = 2.0;
pub const MIN_TICKS: usize = 10;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("degenerate trace: {0}")]
    DegenerateTrace(String),
    #[error("reports cover different vehicles: {0:?} vs {1:?}")]
    MismatchedVehicles(Vec<String>, Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A signal extremum and the time it first occurs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Extremum {
    pub value: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleMetrics {
    pub id: String,
    pub steady_state_y: f64,
    pub speed_convergence_time: Option<f64>,
    pub peak_vy: Extremum,
    pub peak_yaw: Extremum,
    pub min_vy: Extremum,
    pub min_yaw: Extremum,
    pub max_undershoot_y: f64,
    /// x-position at which the undershoot occurs.
    pub undershoot_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Amplification {
    pub follower: String,
    /// `None` when the lead peak is zero.
    pub vy: Option<f64>,
    pub yaw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub vehicles: Vec<VehicleMetrics>,
    pub amplification: Vec<Amplification>,
}

pub fn lateral_velocity(r: &TraceRecord) -> f64 {
    r.v_actual * r.psi.sin()
}

/// Time at which the lead's traveled distance first reaches the lane-change
/// start, or `None` if the run is not a lane change or never gets there.
pub fn maneuver_start_time(lead: &[&TraceRecord], start_x: f64) -> Option<f64> {
    let mut s = 0.0;
    for (i, r) in lead.iter().enumerate() {
        if i > 0 {
            let p = lead[i - 1];
            s += (r.x - p.x).hypot(r.y - p.y);
        }
        if s >= start_x {
            return Some(r.t);
        }
    }
    None
}

fn extremum<F: Fn(&TraceRecord) -> f64>(rows: &[&TraceRecord], f: F, want_max: bool) -> Extremum {
    let mut best = Extremum {
        value: f(rows[0]),
        t: rows[0].t,
    };
    for r in &rows[1..] {
        let v = f(r);
        if (want_max && v > best.value) || (!want_max && v < best.value) {
            best = Extremum { value: v, t: r.t };
        }
    }
    best
}

fn convergence_time(rows: &[&TraceRecord], target: f64) -> Option<f64> {
    let in_band = |r: &TraceRecord| (r.v_actual - target).abs() <= SPEED_BAND;
    let mut since: Option<f64> = None;
    for r in rows {
        if in_band(r) {
            let t0 = *since.get_or_insert(r.t);
            if r.t - t0 >= SUSTAIN_TIME - 1e-9 {
                return Some(t0);
            }
        } else {
            since = None;
        }
    }
    None
}

fn vehicle_metrics(id: &str, rows: &[&TraceRecord], cruise: f64, pre_end: Option<f64>) -> VehicleMetrics {
    let (t_first, t_last) = (rows[0].t, rows[rows.len() - 1].t);
    let tail_start = t_last - STEADY_STATE_FRACTION * (t_last - t_first);
    let tail: Vec<f64> = rows.iter().filter(|r| r.t >= tail_start - 1e-9).map(|r| r.y).collect();
    // Mean taken relative to the first sample so a constant tail is exact.
    let y0 = tail[0];
    let steady_state_y = y0 + tail.iter().map(|y| y - y0).sum::<f64>() / tail.len() as f64;

    let (mut undershoot, mut undershoot_x) = (0.0, rows[0].x);
    for r in rows.iter().filter(|r| pre_end.is_none_or(|e| r.t < e)) {
        if -r.y > undershoot {
            undershoot = -r.y;
            undershoot_x = r.x;
        }
    }

    VehicleMetrics {
        id: id.to_string(),
        steady_state_y,
        speed_convergence_time: convergence_time(rows, cruise),
        peak_vy: extremum(rows, lateral_velocity, true),
        peak_yaw: extremum(rows, |r| r.psi, true),
        min_vy: extremum(rows, lateral_velocity, false),
        min_yaw: extremum(rows, |r| r.psi, false),
        max_undershoot_y: undershoot,
        undershoot_x,
    }
}

fn ratio(follower: f64, lead: f64) -> Option<f64> {
    if lead == 0.0 {
        None
    } else {
        Some(follower.abs() / lead.abs())
    }
}

/// Groups records by vehicle (scenario order, then order of appearance) and
/// sorts each group by time.
pub fn group_by_vehicle(log: &TraceLog) -> Vec<(String, Vec<&TraceRecord>)> {
    let mut ids: Vec<String> = log.scenario.vehicles.iter().map(|v| v.id.clone()).collect();
    for r in &log.records {
        if !ids.contains(&r.vehicle_id) {
            ids.push(r.vehicle_id.clone());
        }
    }
    ids.into_iter()
        .filter_map(|id| {
            let mut rows: Vec<&TraceRecord> = log.records.iter().filter(|r| r.vehicle_id == id).collect();
            rows.sort_by(|a, b| a.t.total_cmp(&b.t));
            (!rows.is_empty()).then_some((id, rows))
        })
        .collect()
}

pub fn compute_metrics(log: &TraceLog) -> Result<MetricsReport, AnalysisError> {
    let groups = group_by_vehicle(log);
    if groups.is_empty() {
        return Err(AnalysisError::DegenerateTrace("no records".into()));
    }
    if let Some((id, rows)) = groups.iter().find(|(_, rows)| rows.len() < MIN_TICKS) {
        return Err(AnalysisError::DegenerateTrace(format!(
            "vehicle '{id}' has {} ticks, at least {MIN_TICKS} required",
            rows.len()
        )));
    }
    let maneuver = &log.scenario.maneuver;
    let pre_end = match maneuver.kind {
        ManeuverKind::LaneChange { start_x, .. } => {
            Some(maneuver_start_time(&groups[0].1, start_x).unwrap_or(f64::INFINITY))
        }
        _ => None,
    };
    let vehicles: Vec<VehicleMetrics> = groups
        .iter()
        .map(|(id, rows)| vehicle_metrics(id, rows, maneuver.cruise_speed, pre_end))
        .collect();
    let lead = &vehicles[0];
    let amplification = vehicles[1..]
        .iter()
        .map(|f| Amplification {
            follower: f.id.clone(),
            vy: ratio(f.peak_vy.value, lead.peak_vy.value),
            yaw: ratio(f.peak_yaw.value, lead.peak_yaw.value),
        })
        .collect();
    Ok(MetricsReport {
        vehicles,
        amplification,
    })
}

/// Names of the metrics exported per vehicle, in export order.
pub const METRIC_NAMES: [&str; 7] = [
    "steady_state_y",
    "speed_convergence_time",
    "peak_vy",
    "peak_yaw_deg",
    "min_vy",
    "min_yaw_deg",
    "max_undershoot_y",
];

impl VehicleMetrics {
    /// `(name, value, time_or_location)` per metric; yaw in degrees.
    pub fn rows(&self) -> [(&'static str, Option<f64>, Option<f64>); 7] {
        [
            (METRIC_NAMES[0], Some(self.steady_state_y), None),
            (METRIC_NAMES[1], self.speed_convergence_time, None),
            (METRIC_NAMES[2], Some(self.peak_vy.value), Some(self.peak_vy.t)),
            (METRIC_NAMES[3], Some(self.peak_yaw.value.to_degrees()), Some(self.peak_yaw.t)),
            (METRIC_NAMES[4], Some(self.min_vy.value), Some(self.min_vy.t)),
            (METRIC_NAMES[5], Some(self.min_yaw.value.to_degrees()), Some(self.min_yaw.t)),
            (METRIC_NAMES[6], Some(self.max_undershoot_y), Some(self.undershoot_x)),
        ]
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(report: &MetricsReport, mut out: W) -> Result<(), AnalysisError> {
    let mut s = String::from("vehicle_id,metric,value,time_or_location\n");
    for v in &report.vehicles {
        for (name, value, at) in v.rows() {
            let _ = writeln!(s, "{},{},{},{}", v.id, name, opt(value), opt(at));
        }
    }
    for a in &report.amplification {
        let _ = writeln!(s, "{},amplification_vy,{},", a.follower, opt(a.vy));
        let _ = writeln!(s, "{},amplification_yaw,{},", a.follower, opt(a.yaw));
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn export_csv(report: &MetricsReport, path: &std::path::Path) -> Result<(), AnalysisError> {
    let mut buf = Vec::new();
    write_metrics_csv(report, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Larger {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub vehicle: String,
    pub metric: &'static str,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl ComparisonRow {
    /// `b - a`, when both are present.
    pub fn delta(&self) -> Option<f64> {
        Some(self.b? - self.a?)
    }
}

/// Which run shows the larger negative excursions on the rearmost follower.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionFlag {
    pub vehicle: String,
    pub vy: Larger,
    pub yaw: Larger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub label_a: String,
    pub label_b: String,
    pub rows: Vec<ComparisonRow>,
    pub flag: Option<ExcursionFlag>,
}

fn larger(a: f64, b: f64) -> Larger {
    match a.abs().total_cmp(&b.abs()) {
        std::cmp::Ordering::Greater => Larger::A,
        std::cmp::Ordering::Less => Larger::B,
        std::cmp::Ordering::Equal => Larger::Tie,
    }
}

pub fn compare_runs(
    a: &MetricsReport,
    b: &MetricsReport,
    label_a: &str,
    label_b: &str,
) -> Result<ComparisonTable, AnalysisError> {
    let ids = |r: &MetricsReport| r.vehicles.iter().map(|v| v.id.clone()).collect::<Vec<_>>();
    if ids(a) != ids(b) {
        return Err(AnalysisError::MismatchedVehicles(ids(a), ids(b)));
    }
    let mut rows = Vec::new();
    for (va, vb) in a.vehicles.iter().zip(&b.vehicles) {
        for ((name, xa, _), (_, xb, _)) in va.rows().into_iter().zip(vb.rows()) {
            rows.push(ComparisonRow {
                vehicle: va.id.clone(),
                metric: name,
                a: xa,
                b: xb,
            });
        }
    }
    for (fa, fb) in a.amplification.iter().zip(&b.amplification) {
        rows.push(ComparisonRow {
            vehicle: fa.follower.clone(),
            metric: "amplification_vy",
            a: fa.vy,
            b: fb.vy,
        });
        rows.push(ComparisonRow {
            vehicle: fa.follower.clone(),
            metric: "amplification_yaw",
            a: fa.yaw,
            b: fb.yaw,
        });
    }
    let flag = if a.vehicles.len() >= 2 {
        let (ra, rb) = (a.vehicles.last().unwrap(), b.vehicles.last().unwrap());
        Some(ExcursionFlag {
            vehicle: ra.id.clone(),
            vy: larger(ra.min_vy.value, rb.min_vy.value),
            yaw: larger(ra.min_yaw.value, rb.min_yaw.value),
        })
    } else {
        None
    };
    Ok(ComparisonTable {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        rows,
        flag,
    })
}

impl ComparisonTable {
    fn flag_label(&self, l: Larger) -> &str {
        match l {
            Larger::A => &self.label_a,
            Larger::B => &self.label_b,
            Larger::Tie => "tie",
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("vehicle_id,metric,{},{},delta\n", self.label_a, self.label_b);
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.vehicle, r.metric, opt(r.a), opt(r.b), opt(r.delta()));
        }
        if let Some(f) = &self.flag {
            let _ = writeln!(s, "{},larger_negative_vy_excursion,{},,", f.vehicle, self.flag_label(f.vy));
            let _ = writeln!(s, "{},larger_negative_yaw_excursion,{},,", f.vehicle, self.flag_label(f.yaw));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let mut lines = vec![[
            "vehicle".to_string(),
            "metric".to_string(),
            self.label_a.clone(),
            self.label_b.clone(),
            "delta".to_string(),
        ]];
        for r in &self.rows {
            lines.push([r.vehicle.clone(), r.metric.to_string(), cell(r.a), cell(r.b), cell(r.delta())]);
        }
        let mut widths = [0usize; 5];
        for l in &lines {
            for (w, c) in widths.iter_mut().zip(l) {
                *w = (*w).max(c.len());
            }
        }
        let mut s = String::new();
        for l in &lines {
            let _ = writeln!(
                s,
                "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
                l[0],
                l[1],
                l[2],
                l[3],
                l[4],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3],
                w4 = widths[4]
            );
        }
        if let Some(f) = &self.flag {
            let _ = writeln!(
                s,
                "larger negative excursions on {}: lateral velocity -> {}, yaw -> {}",
                f.vehicle,
                self.flag_label(f.vy),
                self.flag_label(f.yaw)
            );
        }
        s
    }
}
