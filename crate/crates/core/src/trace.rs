//! Per-tick trace records and their CSV form.

use std::io::{Read, Write};

use thiserror::Error;

use crate::numfmt::sig9;
use crate::scenario::ScenarioSpec;

pub const TRACE_HEADER: [&str; 16] = [
    "t",
    "vehicle_id",
    "x",
    "y",
    "psi",
    "v_actual",
    "vx_cmd",
    "delta_cmd",
    "vx_hat",
    "vy_hat",
    "omega_hat",
    "d_measure",
    "alpha",
    "e_psi",
    "e_y",
    "obs_valid",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceRecord {
    pub t: f64,
    pub vehicle_id: String,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v_actual: f64,
    pub vx_cmd: f64,
    pub delta_cmd: f64,
    pub vx_hat: f64,
    pub vy_hat: f64,
    pub omega_hat: f64,
    pub d_measure: f64,
    pub alpha: f64,
    pub e_psi: f64,
    pub e_y: f64,
    pub obs_valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub scenario: ScenarioSpec,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trace header mismatch: expected {expected}, found {found}")]
    Header { expected: String, found: String },
    #[error("line {line}: bad value '{value}' in column {column}")]
    Value {
        line: u64,
        column: &'static str,
        value: String,
    },
}

pub fn write_trace<W: Write>(records: &[TraceRecord], out: W) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        let floats = [
            r.x,
            r.y,
            r.psi,
            r.v_actual,
            r.vx_cmd,
            r.delta_cmd,
            r.vx_hat,
            r.vy_hat,
            r.omega_hat,
            r.d_measure,
            r.alpha,
            r.e_psi,
            r.e_y,
        ];
        let mut row = Vec::with_capacity(16);
        row.push(sig9(r.t));
        row.push(r.vehicle_id.clone());
        row.extend(floats.iter().map(|&v| sig9(v)));
        row.push(if r.obs_valid { "1" } else { "0" }.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_to_string(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("utf-8 trace")
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut rd = csv::ReaderBuilder::new().from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(TraceError::Header {
            expected: TRACE_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, TraceError> {
            row[i].parse::<f64>().map_err(|_| TraceError::Value {
                line,
                column: TRACE_HEADER[i],
                value: row[i].to_string(),
            })
        };
        let obs_valid = match &row[15] {
            "1" => true,
            "0" => false,
            other => {
                return Err(TraceError::Value {
                    line,
                    column: "obs_valid",
                    value: other.to_string(),
                })
            }
        };
        out.push(TraceRecord {
            t: num(0)?,
            vehicle_id: row[1].to_string(),
            x: num(2)?,
            y: num(3)?,
            psi: num(4)?,
            v_actual: num(5)?,
            vx_cmd: num(6)?,
            delta_cmd: num(7)?,
            vx_hat: num(8)?,
            vy_hat: num(9)?,
            omega_hat: num(10)?,
            d_measure: num(11)?,
            alpha: num(12)?,
            e_psi: num(13)?,
            e_y: num(14)?,
            obs_valid,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TraceRecord> {
        vec![
            TraceRecord {
                t: 0.0,
                vehicle_id: "lead".into(),
                x: 1.0,
                v_actual: 0.2,
                vx_cmd: 0.2,
                ..Default::default()
            },
            TraceRecord {
                t: 1.0 / 30.0,
                vehicle_id: "f1".into(),
                x: 0.506_666_666_666_7,
                y: -0.001_234_567_891,
                psi: -0.35,
                d_measure: 0.5,
                obs_valid: true,
                ..Default::default()
            },
        ]
    }

    #[test]
    fn header_is_exact() {
        let s = trace_to_string(&[]);
        assert_eq!(
            s,
            "t,vehicle_id,x,y,psi,v_actual,vx_cmd,delta_cmd,vx_hat,vy_hat,omega_hat,d_measure,alpha,e_psi,e_y,obs_valid\n"
        );
    }

    #[test]
    fn rows_use_nine_significant_digits() {
        let s = trace_to_string(&sample());
        let rows: Vec<&str> = s.lines().collect();
        assert_eq!(rows[1], "0,lead,1,0,0,0.2,0.2,0,0,0,0,0,0,0,0,0");
        assert_eq!(
            rows[2],
            "0.0333333333,f1,0.506666667,-0.00123456789,-0.35,0,0,0,0,0,0,0.5,0,0,0,1"
        );
    }

    #[test]
    fn round_trip_within_format_precision() {
        let recs = sample();
        let back = read_trace(trace_to_string(&recs).as_bytes()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.vehicle_id, b.vehicle_id);
            assert_eq!(a.obs_valid, b.obs_valid);
            assert!((a.x - b.x).abs() <= 1e-8 * a.x.abs().max(1e-300));
            assert!((a.t - b.t).abs() < 1e-10);
        }
        // A second pass through the format is exact.
        assert_eq!(trace_to_string(&back), trace_to_string(&recs));
    }

    #[test]
    fn rejects_wrong_header_and_bad_values() {
        assert!(matches!(read_trace("a,b\n1,2\n".as_bytes()), Err(TraceError::Header { .. })));
        let mut s = trace_to_string(&sample());
        s = s.replacen("0.506666667", "abc", 1);
        assert!(matches!(read_trace(s.as_bytes()), Err(TraceError::Value { column: "x", .. })));
    }
}
