use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::sim::{EventLog, SimResult};

/// Steps skipped before errors count.
pub const DEFAULT_WARMUP: usize = 50;

/// Error percentiles over all (agent, step) records after warmup, plus run
/// counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub max: f64,
    /// Mean wall-clock per filter step, milliseconds.
    pub ms_per_step: f64,
    /// Agent-side encounter updates over the whole run.
    pub encounters: u64,
    pub anchor_hits: u64,
    pub samples: usize,
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `⌈q·n⌉` (1-based).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Percentiles of the log's errors after `warmup` steps. Counters come from
/// the event tags of every record; timing is left at zero.
pub fn compute_metrics(log: &EventLog, warmup: usize) -> Result<MetricsSummary, HarnessError> {
    let mut errors = log.errors_after(warmup);
    if errors.is_empty() {
        return Err(HarnessError::EmptyLog { warmup });
    }
    errors.sort_by(f64::total_cmp);
    let tagged = |name: &str| {
        log.records
            .iter()
            .filter(|r| r.event_tag.split('+').any(|t| t == name))
            .count() as u64
    };
    Ok(MetricsSummary {
        p25: nearest_rank(&errors, 0.25),
        p50: nearest_rank(&errors, 0.50),
        p75: nearest_rank(&errors, 0.75),
        p90: nearest_rank(&errors, 0.90),
        max: errors[errors.len() - 1],
        ms_per_step: 0.0,
        encounters: tagged("encounter"),
        anchor_hits: tagged("anchor"),
        samples: errors.len(),
    })
}

impl MetricsSummary {
    pub fn from_result(result: &SimResult, warmup: usize) -> Result<Self, HarnessError> {
        Ok(Self {
            ms_per_step: result.timing.ms_per_step(),
            ..compute_metrics(&result.log, warmup)?
        })
    }

    pub fn is_monotone(&self) -> bool {
        0.0 <= self.p25 && self.p25 <= self.p50 && self.p50 <= self.p75 && self.p75 <= self.p90 && self.p90 <= self.max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::EventTags;
    use crate::slam::Pose;
    use proptest::prelude::*;

    fn log_of(errors: &[f64], steps_from: usize) -> EventLog {
        let mut log = EventLog::default();
        for (k, e) in errors.iter().enumerate() {
            log.push(
                steps_from + k,
                0,
                &Pose::new(0.0, 0.0, 0.0),
                &Pose::new(*e, 0.0, 0.0),
                EventTags::default(),
            );
        }
        log
    }

    #[test]
    fn constant_errors() {
        let m = compute_metrics(&log_of(&[2.0; 10], 1), 0).unwrap();
        assert_eq!([m.p25, m.p50, m.p75, m.p90, m.max], [2.0; 5]);
    }

    #[test]
    fn nearest_rank_on_four_values() {
        let m = compute_metrics(&log_of(&[3.0, 1.0, 4.0, 2.0], 1), 0).unwrap();
        assert_eq!(m.p50, 2.0);
        assert_eq!(m.p25, 1.0);
        assert_eq!(m.p75, 3.0);
        assert_eq!(m.p90, 4.0);
        assert_eq!(m.max, 4.0);
    }

    #[test]
    fn warmup_is_skipped_and_empty_is_an_error() {
        let log = log_of(&[100.0, 100.0, 1.0, 1.0], 1);
        let m = compute_metrics(&log, 2).unwrap();
        assert_eq!(m.max, 1.0);
        assert_eq!(m.samples, 2);
        assert!(matches!(
            compute_metrics(&log, 4),
            Err(HarnessError::EmptyLog { warmup: 4 })
        ));
    }

    #[test]
    fn counters_come_from_tags() {
        let mut log = log_of(&[1.0, 1.0, 1.0], 1);
        log.records[0].event_tag = "encounter".into();
        log.records[1].event_tag = "anchor+resample".into();
        log.records[2].event_tag = "encounter".into();
        let m = compute_metrics(&log, 0).unwrap();
        assert_eq!((m.encounters, m.anchor_hits), (2, 1));
    }

    proptest! {
        #[test]
        fn percentiles_are_ordered(errors in prop::collection::vec(0.0f64..100.0, 1..200)) {
            let m = compute_metrics(&log_of(&errors, 1), 0).unwrap();
            prop_assert!(m.is_monotone());
            prop_assert!(errors.contains(&m.p50));
        }
    }
}
