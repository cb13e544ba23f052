use std::collections::BTreeMap;

use nalgebra::Vector2;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Environment, SimConfig, SimError};
use crate::encounter::{
    detect_encounter_bluetooth, detect_encounter_wifi, wifi_similarity, DistanceModel, EncounterObservation,
    EncounterSource, WifiScan,
};
use crate::slam::{
    predict_measurement, AnchorKind, ConfusionMatrix, Measurement, MeasurementMode, Pose, PublishedEstimate,
};

/// A building-anchor pattern recognized at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorEvent {
    pub anchor_id: usize,
    pub actual: AnchorKind,
    pub detected: AnchorKind,
    pub z: Measurement,
}

/// Anchor measurement sensor settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorSensor {
    pub trigger_radius: f64,
    pub r_var: f64,
    pub mode: MeasurementMode,
}

/// Noisy version of the exact measurement between `pose` and `target`.
pub fn noisy_measurement<R: Rng + ?Sized>(
    pose: &Pose,
    target: &Vector2<f64>,
    mode: MeasurementMode,
    r_var: f64,
    rng: &mut R,
) -> Measurement {
    let n = Normal::new(0.0, r_var.sqrt()).expect("r_var >= 0");
    match predict_measurement(pose, target, mode) {
        Measurement::Range(d) => Measurement::Range((d + n.sample(rng)).abs()),
        Measurement::Offset(v) => Measurement::Offset(v + Vector2::new(n.sample(rng), n.sample(rng))),
    }
}

/// Emits at most one anchor event: the nearest anchor inside the trigger
/// radius, with its detected type drawn from the confusion matrix.
pub fn detect_building_anchor_event<R: Rng + ?Sized>(
    env: &Environment,
    pose: &Pose,
    confusion: &ConfusionMatrix,
    sensor: &AnchorSensor,
    rng: &mut R,
) -> Option<AnchorEvent> {
    let p = pose.position();
    let (anchor, _) = env
        .building_anchors
        .iter()
        .map(|a| (a, (a.position - p).norm()))
        .filter(|(_, d)| *d <= sensor.trigger_radius)
        .min_by(|x, y| x.1.total_cmp(&y.1))?;
    let dist = WeightedIndex::new(confusion.emission(anchor.kind)).expect("emission is a distribution");
    let detected = AnchorKind(dist.sample(rng));
    Some(AnchorEvent {
        anchor_id: anchor.id,
        actual: anchor.kind,
        detected,
        z: noisy_measurement(pose, &anchor.position, sensor.mode, sensor.r_var, rng),
    })
}

/// Radio readings available to the encounter detector at one step.
#[derive(Debug, Clone, PartialEq)]
pub enum RadioReadings {
    /// One scan per agent.
    Wifi(Vec<WifiScan>),
    /// One RSS per unordered agent pair `(i, j)`, `i < j`, within range.
    Bluetooth(BTreeMap<(usize, usize), f64>),
}

/// Encounter detection for one step.
///
/// Only pairs whose true separation is within `encounter_range` exchange
/// readings. A candidate pair is detected symmetrically; each agent then
/// keeps the candidate with the smallest published covariance trace (ties go
/// to the lower id). Agents without a candidate get no observation. Pairs
/// for which `eligible(i, j)` is false (with `i < j`) are skipped.
pub fn detect_encounters(
    positions: &[Vector2<f64>],
    readings: &RadioReadings,
    snapshots: &[PublishedEstimate],
    model: &DistanceModel,
    config: &SimConfig,
    timestamp: u64,
    eligible: impl Fn(usize, usize) -> bool,
) -> Result<Vec<EncounterObservation>, SimError> {
    let n = positions.len();
    let mut candidates: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if (positions[i] - positions[j]).norm() > config.encounter_range || !eligible(i, j) {
                continue;
            }
            let signal = match readings {
                RadioReadings::Wifi(scans) => {
                    let sim = wifi_similarity(&scans[i], &scans[j], config.top_n);
                    match sim {
                        Some(s) if detect_encounter_wifi(sim, config.wifi_threshold) => s,
                        _ => continue,
                    }
                }
                RadioReadings::Bluetooth(rss) => match rss.get(&(i, j)) {
                    Some(&r) if detect_encounter_bluetooth(r, config.bluetooth_threshold) => r,
                    _ => continue,
                },
            };
            candidates[i].push((j, signal));
            candidates[j].push((i, signal));
        }
    }
    let source = match readings {
        RadioReadings::Wifi(_) => EncounterSource::Wifi,
        RadioReadings::Bluetooth(_) => EncounterSource::Bluetooth,
    };
    let r_var = config.encounter_r_var.unwrap_or_else(|| model.variance());
    let mut out = Vec::new();
    for (i, cands) in candidates.iter().enumerate() {
        let best = cands.iter().min_by(|a, b| {
            snapshots[a.0]
                .confidence_trace()
                .total_cmp(&snapshots[b.0].confidence_trace())
                .then(a.0.cmp(&b.0))
        });
        if let Some(&(j, signal)) = best {
            // a perfect WiFi match has no log-model distance; treat it as contact
            let z = if source == EncounterSource::Wifi && signal <= 0.0 {
                0.0
            } else {
                model
                    .distance(signal)
                    .map_err(|e| SimError::Calibration(e.to_string()))?
            };
            out.push(
                EncounterObservation::new(i, j, z, r_var, source, timestamp)
                    .map_err(|e| SimError::Calibration(e.to_string()))?,
            );
        }
    }
    Ok(out)
}
