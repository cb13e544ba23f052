use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{HarnessError, MetricsSummary, SweepRow};
use crate::sim::{SimConfig, SimResult, SimStats};

/// Column names of the sweep table.
pub const SWEEP_HEADER: [&str; 8] = ["param", "seed", "p25", "p50", "p75", "p90", "max", "ms_per_step"];

/// Deterministic part of a run's summary.
#[derive(Serialize)]
struct RunSummary<'a> {
    config: &'a SimConfig,
    p25: f64,
    p50: f64,
    p75: f64,
    p90: f64,
    max: f64,
    encounters: u64,
    anchor_hits: u64,
    samples: usize,
    stats: &'a SimStats,
}

#[derive(Serialize)]
struct TimingSummary {
    ms_per_step: f64,
    slam_seconds: f64,
    slam_steps: u64,
}

/// Writes pretty JSON plus a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

/// Writes `events.csv`, `summary.json`, `environment.json` and
/// `timing.json` into `dir`, creating it if needed. Everything except
/// `timing.json` is a pure function of the config.
pub fn emit_run(
    dir: &Path,
    config: &SimConfig,
    result: &SimResult,
    metrics: &MetricsSummary,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let events = dir.join("events.csv");
    let mut w = create(&events)?;
    result
        .log
        .write_csv(&mut w)
        .map_err(|e| HarnessError::io(&events, e.into()))?;
    w.flush().map_err(|e| HarnessError::io(&events, e))?;

    write_json(
        &dir.join("summary.json"),
        &RunSummary {
            config,
            p25: metrics.p25,
            p50: metrics.p50,
            p75: metrics.p75,
            p90: metrics.p90,
            max: metrics.max,
            encounters: metrics.encounters,
            anchor_hits: metrics.anchor_hits,
            samples: metrics.samples,
            stats: &result.stats,
        },
    )?;
    write_json(&dir.join("environment.json"), &result.environment)?;
    write_json(
        &dir.join("timing.json"),
        &TimingSummary {
            ms_per_step: metrics.ms_per_step,
            slam_seconds: result.timing.slam_seconds,
            slam_steps: result.timing.slam_steps,
        },
    )
}

pub fn emit_sweep_header<W: Write>(w: &mut csv::Writer<W>) -> Result<(), csv::Error> {
    w.write_record(SWEEP_HEADER)?;
    w.flush()?;
    Ok(())
}

/// Appends one row and flushes so partial sweeps are readable.
pub fn emit_sweep_row<W: Write>(w: &mut csv::Writer<W>, row: &SweepRow) -> Result<(), csv::Error> {
    let m = &row.metrics;
    w.write_record([
        row.value.clone(),
        row.seed.to_string(),
        m.p25.to_string(),
        m.p50.to_string(),
        m.p75.to_string(),
        m.p90.to_string(),
        m.max.to_string(),
        m.ms_per_step.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
