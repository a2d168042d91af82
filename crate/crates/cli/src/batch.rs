use std::fs;
use std::path::Path;

use platoon_core::analysis::{compare_runs, compute_metrics, write_metrics_csv, MetricsReport};
use platoon_core::scenario::{load_scenario, LateralKind, ScenarioSpec};
use platoon_core::sim::run_scenario;
use platoon_core::trace::{read_trace, write_trace, TraceLog};

use crate::CliError;

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io(path, e))
}

fn metrics_bytes(report: &MetricsReport) -> Vec<u8> {
    let mut buf = Vec::new();
    write_metrics_csv(report, &mut buf).expect("writing to memory");
    buf
}

/// Runs `spec` and writes trace.csv and metrics.csv into `dir`.
fn run_into(spec: &ScenarioSpec, dir: &Path) -> Result<MetricsReport, CliError> {
    let log = run_scenario(spec)?;
    let report = compute_metrics(&log).map_err(|e| CliError::Runtime(e.to_string()))?;
    create_dir(dir)?;
    let mut trace = Vec::new();
    write_trace(&log.records, &mut trace).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&dir.join("trace.csv"), &trace)?;
    write_file(&dir.join("metrics.csv"), &metrics_bytes(&report))?;
    eprintln!(
        "{} ({}, seed {}): wrote {}",
        spec.name,
        spec.lateral.as_str(),
        spec.seed,
        dir.display()
    );
    Ok(report)
}

pub fn run(
    scenario: &str,
    out: &Path,
    lateral: Option<LateralKind>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let mut spec = load_scenario(scenario)?;
    if let Some(l) = lateral {
        spec = spec.with_lateral(l);
    }
    if let Some(s) = seed {
        spec = spec.with_seed(s);
    }
    run_into(&spec, out).map(|_| ())
}

pub fn compare(
    scenario: &str,
    out: &Path,
    seed: Option<u64>,
    stanley_seed: Option<u64>,
) -> Result<(), CliError> {
    let mut spec = load_scenario(scenario)?;
    if let Some(s) = seed {
        spec = spec.with_seed(s);
    }
    if let Some(s) = stanley_seed {
        if s != spec.seed {
            return Err(CliError::Config(format!(
                "refusing to compare runs with different seeds ({} vs {s})",
                spec.seed
            )));
        }
    }
    let pp = run_into(
        &spec.clone().with_lateral(LateralKind::PurePursuit),
        &out.join(LateralKind::PurePursuit.as_str()),
    )?;
    let st = run_into(
        &spec.with_lateral(LateralKind::Stanley),
        &out.join(LateralKind::Stanley.as_str()),
    )?;
    let table = compare_runs(
        &pp,
        &st,
        LateralKind::PurePursuit.as_str(),
        LateralKind::Stanley.as_str(),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&out.join("comparison.csv"), table.to_csv().as_bytes())?;
    print!("{}", table.to_text());
    Ok(())
}

pub fn analyze(trace: &Path, scenario: &str, out: &Path) -> Result<(), CliError> {
    let spec = load_scenario(scenario)?;
    let file = fs::File::open(trace).map_err(|e| io(trace, e))?;
    let records = read_trace(file).map_err(|e| io(trace, e))?;
    let report = compute_metrics(&TraceLog {
        scenario: spec,
        records,
    })
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    create_dir(out)?;
    write_file(&out.join("metrics.csv"), &metrics_bytes(&report))
}
