use serde::{Deserialize, Serialize};
use toml::Value;

use super::{ExperimentSpec, HarnessError, MetricsSummary, DEFAULT_WARMUP};
use crate::sim::run_simulation;

/// One (value, seed) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// The swept value as written in the sweep file.
    pub value: String,
    pub seed: u64,
    pub metrics: MetricsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub value: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

impl SweepReport {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    /// Rows for one swept value, in seed order.
    pub fn rows_for<'a>(&'a self, value: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.value == value)
    }

    /// Mean of `f` over the rows of one value.
    pub fn mean_of(&self, value: &str, f: impl Fn(&MetricsSummary) -> f64) -> Option<f64> {
        let xs: Vec<f64> = self.rows_for(value).map(|r| f(&r.metrics)).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Renders a TOML value the way it appears in the sweep table.
pub(crate) fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Runs every (value, seed) cell in value-major order. `on_row` sees each
/// row as soon as it exists; a failing cell is recorded and the sweep moves
/// on.
pub fn run_sweep(spec: &ExperimentSpec, mut on_row: impl FnMut(&SweepRow)) -> SweepReport {
    let mut report = SweepReport::default();
    for value in &spec.sweep.values {
        let label = value_label(value);
        for k in 0..spec.n_seeds {
            let seed = spec.base.seed + k;
            let outcome = spec
                .cell(value, k)
                .map_err(|message| HarnessError::Config {
                    path: spec.sweep.param.clone(),
                    message,
                })
                .and_then(|cfg| Ok(run_simulation(&cfg)?))
                .and_then(|result| MetricsSummary::from_result(&result, DEFAULT_WARMUP));
            match outcome {
                Ok(metrics) => {
                    let row = SweepRow {
                        value: label.clone(),
                        seed,
                        metrics,
                    };
                    on_row(&row);
                    report.rows.push(row);
                }
                Err(e) => report.failures.push(SweepFailure {
                    value: label.clone(),
                    seed,
                    message: e.to_string(),
                }),
            }
        }
    }
    report
}
