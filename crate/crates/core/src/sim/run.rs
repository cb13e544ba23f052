use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::streams::{stream_rng, Stream};
use super::{
    advance_agents, calibrate, detect_building_anchor_event, detect_encounters, generate_environment,
    noisy_measurement, random_waypoint, synthesize_bluetooth_rss, synthesize_wifi_scan, AgentTruth, AnchorSensor,
    Calibration, Environment, RadioReadings, SimConfig, SimError,
};
use crate::encounter::{EncounterObservation, EncounterSource};
use crate::slam::{
    correct, predict, AnchorEstimate, Measurement, MeasurementMode, Observation, Pose, PublishedEstimate, SlamState,
};

/// What happened to one agent during one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventTags {
    pub encounter: bool,
    pub anchor: bool,
    pub resample: bool,
}

impl fmt::Display for EventTags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [
            (self.encounter, "encounter"),
            (self.anchor, "anchor"),
            (self.resample, "resample"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, name)| *name)
        .collect();
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

/// One row of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub step: usize,
    pub agent_id: usize,
    pub true_x: f64,
    pub true_y: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub error_m: f64,
    pub event_tag: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

impl EventLog {
    pub fn push(&mut self, step: usize, agent_id: usize, truth: &Pose, estimate: &Pose, tags: EventTags) {
        let (t, e) = (truth.position(), estimate.position());
        self.records.push(EventRecord {
            step,
            agent_id,
            true_x: t.x,
            true_y: t.y,
            est_x: e.x,
            est_y: e.y,
            error_m: (e - t).norm(),
            event_tag: tags.to_string(),
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Errors of every record after the first `warmup` steps.
    pub fn errors_after(&self, warmup: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.step > warmup)
            .map(|r| r.error_m)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, csv::Error> {
        let records = csv::Reader::from_reader(r)
            .deserialize()
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { records })
    }
}

/// Event counts over a whole run, summed across agents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    /// Agent-side human-anchor updates.
    pub encounters: u64,
    pub anchor_hits: u64,
    pub resamples: u64,
    pub new_anchors: u64,
    pub regularizations: u64,
    pub degeneracy_resets: u64,
}

/// Wall-clock spent inside the filter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timing {
    pub slam_seconds: f64,
    pub slam_steps: u64,
}

impl Timing {
    pub fn ms_per_step(&self) -> f64 {
        if self.slam_steps == 0 {
            0.0
        } else {
            1000.0 * self.slam_seconds / self.slam_steps as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub environment: Environment,
    pub calibration: Option<Calibration>,
    pub log: EventLog,
    pub stats: SimStats,
    pub timing: Timing,
}

/// Surveyed building map shared by every agent, or empty when the map is learned.
fn prior_map(env: &Environment, config: &SimConfig) -> Vec<AnchorEstimate> {
    let Some(std) = config.prior_map_std else {
        return Vec::new();
    };
    let mut rng = stream_rng(config.seed, Stream::PriorMap, 0);
    let noise = Normal::new(0.0, std).expect("validated std");
    env.building_anchors
        .iter()
        .map(|a| {
            let mu = a.position + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
            AnchorEstimate::new(mu, Matrix2::identity() * (std * std), a.kind)
        })
        .collect()
}

fn rngs(seed: u64, stream: Stream, n: usize) -> Vec<ChaCha8Rng> {
    (0..n).map(|i| stream_rng(seed, stream, i as u64)).collect()
}

fn radio_readings(
    env: &Environment,
    positions: &[Vector2<f64>],
    config: &SimConfig,
    step: u64,
    radio: &mut [ChaCha8Rng],
) -> RadioReadings {
    match config.encounter_model {
        EncounterSource::Wifi => RadioReadings::Wifi(
            positions
                .iter()
                .zip(radio.iter_mut())
                .map(|(p, rng)| synthesize_wifi_scan(env, p, step, rng))
                .collect(),
        ),
        EncounterSource::Bluetooth => {
            let mut rss = BTreeMap::new();
            for i in 0..positions.len() {
                for j in (i + 1)..positions.len() {
                    let d = (positions[i] - positions[j]).norm();
                    if d <= config.encounter_range {
                        rss.insert((i, j), synthesize_bluetooth_rss(d, &env.bluetooth, &mut radio[i]));
                    }
                }
            }
            RadioReadings::Bluetooth(rss)
        }
    }
}

fn human_observation(
    enc: &EncounterObservation,
    me: &Pose,
    partner_truth: &Pose,
    snapshot: &PublishedEstimate,
    mode: MeasurementMode,
    rng: &mut ChaCha8Rng,
) -> Observation {
    let z = match mode {
        MeasurementMode::Range => Measurement::Range(enc.z),
        MeasurementMode::Offset => noisy_measurement(me, &partner_truth.position(), mode, enc.r_var, rng),
    };
    Observation::Human {
        partner: *snapshot,
        z,
        r_var: enc.r_var,
    }
}

/// Runs every agent for `config.steps` steps.
///
/// Within a step all agents move first, then the published estimates are
/// frozen, then observations are applied in ascending agent id. A building
/// anchor takes precedence over an encounter in the same step.
pub fn run_simulation(config: &SimConfig) -> Result<SimResult, SimError> {
    config.validate()?;
    let env = generate_environment(config)?;
    let n = config.n_agents;
    let slam_cfg = config.slam_config();
    let use_humans = config.human_anchors && n > 1;
    let calibration = if use_humans {
        Some(calibrate(
            &env,
            config,
            &mut stream_rng(config.seed, Stream::Calibration, 0),
        )?)
    } else {
        None
    };

    let mut traj = rngs(config.seed, Stream::Trajectory, n);
    let mut noise = rngs(config.seed, Stream::ControlNoise, n);
    let mut radio = rngs(config.seed, Stream::Radio, n);
    let mut sensor_rngs = rngs(config.seed, Stream::AnchorSensor, n);
    let mut filter = rngs(config.seed, Stream::Filter, n);

    let start = Pose::new(env.entrance.x, env.entrance.y, std::f64::consts::FRAC_PI_2);
    let mut agents: Vec<AgentTruth> = (0..n)
        .map(|i| AgentTruth::new(i, start, config.step_length, random_waypoint(&env, &mut traj[i])))
        .collect();
    let prior = prior_map(&env, config);
    let mut states = (0..n)
        .map(|i| SlamState::new(i, start, config.particles).map(|s| s.with_anchors(&prior)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| SimError::Slam {
            step: 0,
            agent: 0,
            source: e,
        })?;
    let sensor = AnchorSensor {
        trigger_radius: config.trigger_radius,
        r_var: config.building_r_var,
        mode: config.measurement_mode,
    };

    let mut log = EventLog {
        records: Vec::with_capacity(n * config.steps),
    };
    let mut stats = SimStats::default();
    let mut timing = Timing::default();
    let mut last_contact: BTreeMap<(usize, usize), usize> = BTreeMap::new();

    for step in 1..=config.steps {
        let controls = advance_agents(
            &env,
            &mut agents,
            config.sigma_l,
            config.sigma_phi,
            &mut traj,
            &mut noise,
        );
        for (i, state) in states.iter_mut().enumerate() {
            let t0 = Instant::now();
            predict(state, &controls[i].observed, &slam_cfg, &mut filter[i]);
            timing.slam_seconds += t0.elapsed().as_secs_f64();
        }
        let truths: Vec<Pose> = agents.iter().map(AgentTruth::pose).collect();
        let snapshots: Vec<PublishedEstimate> = states.iter().map(|s| s.published).collect();

        let anchor_events: Vec<_> = truths
            .iter()
            .zip(sensor_rngs.iter_mut())
            .map(|(t, rng)| detect_building_anchor_event(&env, t, &config.confusion, &sensor, rng))
            .collect();

        let mut partner: Vec<Option<EncounterObservation>> = vec![None; n];
        if let Some(cal) = &calibration {
            let positions: Vec<Vector2<f64>> = truths.iter().map(Pose::position).collect();
            let readings = radio_readings(&env, &positions, config, step as u64, &mut radio);
            let eligible = |i: usize, j: usize| {
                last_contact
                    .get(&(i, j))
                    .is_none_or(|&s: &usize| step - s > config.encounter_cooldown)
            };
            let found = detect_encounters(
                &positions,
                &readings,
                &snapshots,
                &cal.model,
                config,
                step as u64,
                eligible,
            )?;
            for enc in found {
                last_contact.insert((enc.user_a.min(enc.user_b), enc.user_a.max(enc.user_b)), step);
                partner[enc.user_a] = Some(enc);
            }
        }

        for i in 0..n {
            let obs = if let Some(ev) = &anchor_events[i] {
                Some(Observation::Building {
                    z: ev.z,
                    detected: ev.detected,
                })
            } else {
                partner[i].as_ref().map(|enc| {
                    human_observation(
                        enc,
                        &truths[i],
                        &truths[enc.user_b],
                        &snapshots[enc.user_b],
                        config.measurement_mode,
                        &mut radio[i],
                    )
                })
            };
            let t0 = Instant::now();
            let out = correct(&mut states[i], obs.as_ref(), &slam_cfg, &mut filter[i])
                .map_err(|source| SimError::Slam { step, agent: i, source })?;
            timing.slam_seconds += t0.elapsed().as_secs_f64();
            timing.slam_steps += 1;

            stats.encounters += out.human_update as u64;
            stats.anchor_hits += out.building_update as u64;
            stats.resamples += out.resampled as u64;
            stats.new_anchors += out.new_anchors as u64;
            let tags = EventTags {
                encounter: out.human_update,
                anchor: out.building_update,
                resample: out.resampled,
            };
            log.push(step, i, &truths[i], &states[i].published.pose, tags);
        }
    }
    for s in &states {
        stats.regularizations += s.diagnostics.regularizations;
        stats.degeneracy_resets += s.diagnostics.degeneracy_resets;
    }
    Ok(SimResult {
        environment: env,
        calibration,
        log,
        stats,
        timing,
    })
}
