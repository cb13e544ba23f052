use std::f64::consts::TAU;

use nalgebra::{Matrix2, Vector2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::sim::observe_control;
use crate::sim::streams::{stream_rng, Stream};
use crate::slam::{
    correct, estimate_error, expected_error_contraction, predict, refine_particle_position, AnchorEstimate, AnchorKind,
    ConfusionMatrix, ControlInput, Measurement, MeasurementMode, NoiseParams, Observation, Pose, SamplingMode,
    SlamConfig, SlamError, SlamState,
};

/// Settings for both parts of the convergence study. Everything is in the
/// offset measurement model with isotropic covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub seed: u64,
    /// Independent single-update trials.
    pub trials: usize,
    /// Error of the predicted position before the update.
    pub psi_prev: [f64; 2],
    /// Error of the anchor's estimated position.
    pub psi_anchor: [f64; 2],
    /// Measurement noise variance per axis.
    pub r_var: f64,
    /// Prior position variance per axis.
    pub p_var: f64,
    /// Anchor covariance per axis.
    pub sigma_anchor_var: f64,
    pub loop_steps: usize,
    /// Steps per lap of the closed loop.
    pub loop_len: usize,
    pub step_length: f64,
    pub sigma_l: f64,
    /// Heading noise of the loop walk. Position fixes never correct the
    /// heading, so the default keeps it at zero.
    pub sigma_phi: f64,
    /// Noise variance of the anchor sightings on the loop.
    pub loop_r_var: f64,
    pub trigger_radius: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 10_000,
            psi_prev: [2.0, 0.0],
            psi_anchor: [0.0, 0.0],
            r_var: 1.0,
            p_var: 1.0,
            sigma_anchor_var: 0.0,
            loop_steps: 10_000,
            loop_len: 20,
            step_length: 0.7,
            sigma_l: 0.05,
            sigma_phi: 0.0,
            loop_r_var: 0.01,
            trigger_radius: 0.5,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            ("r_var", self.r_var),
            ("p_var", self.p_var),
            ("loop_r_var", self.loop_r_var),
            ("step_length", self.step_length),
            ("trigger_radius", self.trigger_radius),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite (got {v})"));
            }
        }
        for (name, v) in [
            ("sigma_anchor_var", self.sigma_anchor_var),
            ("sigma_l", self.sigma_l),
            ("sigma_phi", self.sigma_phi),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be >= 0 (got {v})"));
            }
        }
        if self.trials == 0 || self.loop_steps == 0 || self.loop_len < 3 {
            return Err("trials and loop_steps must be >= 1 and loop_len >= 3".into());
        }
        Ok(())
    }
}

/// Monte Carlo mean of the post-update error against the analytic value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trials: usize,
    pub empirical: [f64; 2],
    pub predicted: [f64; 2],
    pub empirical_norm: f64,
    pub predicted_norm: f64,
    /// `|empirical − predicted| / |predicted|`.
    pub relative_deviation: f64,
    /// Spectral norm of the contraction matrix.
    pub contraction_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub steps: usize,
    pub anchor_sightings: usize,
    /// Mean error over the last quarter of the run, single particle.
    pub filtered_final_quartile: f64,
    /// Same with no anchor sightings at all.
    pub dead_reckoning_final_quartile: f64,
    /// `dead_reckoning_final_quartile / filtered_final_quartile`.
    pub improvement: f64,
    pub filtered_max: f64,
    /// Mean error over the second quarter, for comparison with the last.
    pub filtered_second_quartile: f64,
    pub finite: bool,
    /// The last quarter's mean is at most twice the second quarter's.
    pub bounded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub trials: TrialReport,
    pub long_run: LoopReport,
}

/// Repeats one refinement against a single anchor from the same prior.
///
/// The user is at the origin with predicted position `psi_prev`; the anchor
/// estimate sits `psi_anchor` away from its true position and the offset
/// measurement carries `N(0, r_var·I)` noise.
pub fn single_update_trials(cfg: &ConvergenceConfig) -> Result<TrialReport, HarnessError> {
    cfg.validate().map_err(config_error)?;
    let psi_prev = Vector2::from(cfg.psi_prev);
    let psi_anchor = Vector2::from(cfg.psi_anchor);
    let r = Matrix2::identity() * cfg.r_var;
    let p = Matrix2::identity() * cfg.p_var;
    let sigma = Matrix2::identity() * cfg.sigma_anchor_var;

    let anchor_truth = Vector2::new(5.0, 3.0);
    let anchor = AnchorEstimate::new(anchor_truth + psi_anchor, sigma, AnchorKind(0));
    let s_hat = Pose::new(psi_prev.x, psi_prev.y, 0.0);
    let noise = Normal::new(0.0, cfg.r_var.sqrt()).expect("validated variance");
    let mut meas_rng = stream_rng(cfg.seed, Stream::AnchorSensor, 0);
    let mut filter_rng = stream_rng(cfg.seed, Stream::Filter, 0);

    let mut sum = Vector2::zeros();
    for _ in 0..cfg.trials {
        let n = Vector2::new(noise.sample(&mut meas_rng), noise.sample(&mut meas_rng));
        let z = Measurement::Offset(anchor_truth + n);
        let prop = refine_particle_position(&s_hat, &p, &anchor, &z, cfg.r_var, &mut filter_rng).map_err(slam_error)?;
        sum += prop.sample.position();
    }
    let empirical = sum / cfg.trials as f64;
    let predicted = expected_error_contraction(&psi_prev, &r, &sigma, &p, &psi_anchor).map_err(slam_error)?;
    let contraction = crate::slam::contraction_matrix(&r, &sigma, &p).map_err(slam_error)?;
    let predicted_norm = predicted.norm();
    Ok(TrialReport {
        trials: cfg.trials,
        empirical: [empirical.x, empirical.y],
        predicted: [predicted.x, predicted.y],
        empirical_norm: empirical.norm(),
        predicted_norm,
        relative_deviation: (empirical - predicted).norm() / predicted_norm.max(f64::MIN_POSITIVE),
        contraction_norm: contraction.singular_values().max(),
    })
}

/// Errors of a single-particle filter walking a closed polygon, with or
/// without sightings of one exactly known anchor at the first vertex.
fn loop_errors(cfg: &ConvergenceConfig, use_anchor: bool) -> Result<(Vec<f64>, usize), HarnessError> {
    let turn = TAU / cfg.loop_len as f64;
    let anchor_pos = Vector2::zeros();
    let slam = SlamConfig {
        noise: NoiseParams {
            sigma_l: cfg.sigma_l,
            sigma_phi: cfg.sigma_phi,
            r_var: cfg.loop_r_var,
        },
        mode: MeasurementMode::Offset,
        sampling: SamplingMode::OneShot,
        confusion: ConfusionMatrix::identity(1),
        // The only anchor is known; never open a second one.
        p0: 0.0,
    };
    let start = Pose::new(0.0, 0.0, 0.0);
    let mut state = SlamState::new(0, start, 1)
        .map_err(slam_error)?
        .with_anchors(&[AnchorEstimate::known(anchor_pos, AnchorKind(0))]);
    let mut truth = start;
    let mut control_rng = stream_rng(cfg.seed, Stream::ControlNoise, 0);
    let mut sensor_rng = stream_rng(cfg.seed, Stream::AnchorSensor, 0);
    let mut filter_rng = stream_rng(cfg.seed, Stream::Filter, 0);
    let noise = Normal::new(0.0, cfg.loop_r_var.sqrt()).expect("validated variance");

    let mut errors = Vec::with_capacity(cfg.loop_steps);
    let mut sightings = 0;
    for _ in 0..cfg.loop_steps {
        let u_true = ControlInput::new(cfg.step_length, turn);
        truth.phi += turn;
        truth.x += cfg.step_length * truth.phi.cos();
        truth.y += cfg.step_length * truth.phi.sin();
        let u = observe_control(&u_true, cfg.sigma_l, cfg.sigma_phi, &mut control_rng);
        predict(&mut state, &u, &slam, &mut filter_rng);
        let n = Vector2::new(noise.sample(&mut sensor_rng), noise.sample(&mut sensor_rng));
        if use_anchor && (truth.position() - anchor_pos).norm() <= cfg.trigger_radius {
            let obs = Observation::Building {
                z: Measurement::Offset(anchor_pos - truth.position() + n),
                detected: AnchorKind(0),
            };
            correct(&mut state, Some(&obs), &slam, &mut filter_rng).map_err(slam_error)?;
            sightings += 1;
        }
        errors.push(estimate_error(&state, &truth).norm());
    }
    Ok((errors, sightings))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Long single-particle run on a loop against the dead-reckoning baseline
/// driven by the same control noise.
pub fn loop_run(cfg: &ConvergenceConfig) -> Result<LoopReport, HarnessError> {
    cfg.validate().map_err(config_error)?;
    if cfg.loop_steps < 4 {
        return Err(config_error("loop_steps must be >= 4".into()));
    }
    let (filtered, sightings) = loop_errors(cfg, true)?;
    let (dead, _) = loop_errors(cfg, false)?;
    let q = cfg.loop_steps / 4;
    let last = mean(&filtered[cfg.loop_steps - q..]);
    let second = mean(&filtered[q..2 * q]);
    let dead_last = mean(&dead[cfg.loop_steps - q..]);
    let finite = filtered.iter().all(|e| e.is_finite());
    Ok(LoopReport {
        steps: cfg.loop_steps,
        anchor_sightings: sightings,
        filtered_final_quartile: last,
        dead_reckoning_final_quartile: dead_last,
        improvement: dead_last / last,
        filtered_max: filtered.iter().copied().fold(0.0, f64::max),
        filtered_second_quartile: second,
        finite,
        bounded: finite && last <= 2.0 * second,
    })
}

pub fn convergence_experiment(cfg: &ConvergenceConfig) -> Result<ConvergenceReport, HarnessError> {
    Ok(ConvergenceReport {
        trials: single_update_trials(cfg)?,
        long_run: loop_run(cfg)?,
    })
}

fn config_error(message: String) -> HarnessError {
    HarnessError::Config {
        path: "convergence config".into(),
        message,
    }
}

fn slam_error(e: SlamError) -> HarnessError {
    HarnessError::Run(e.to_string())
}
