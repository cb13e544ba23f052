use serde::{Deserialize, Serialize};

use super::SimError;
use crate::encounter::EncounterSource;
use crate::slam::{ConfusionMatrix, MeasurementMode, NoiseParams, SamplingMode, SlamConfig};

/// Radio channel parameters shared by the WiFi and Bluetooth synthesizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub n_access_points: usize,
    pub ap_tx_power: f64,
    pub ap_path_loss: f64,
    /// Per-scan fading noise, dB.
    pub wifi_noise: f64,
    pub bt_tx_power: f64,
    pub bt_path_loss: f64,
    pub bt_noise: f64,
    /// Pairs sampled to fit the distance model.
    pub calibration_samples: usize,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            n_access_points: 30,
            ap_tx_power: -30.0,
            ap_path_loss: 3.0,
            wifi_noise: 2.0,
            bt_tx_power: -55.0,
            bt_path_loss: 2.5,
            bt_noise: 3.5,
            calibration_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    OneShot,
    Iterative,
}

/// Everything needed to reproduce one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_agents: usize,
    pub width: f64,
    pub height: f64,
    pub n_building_anchors: usize,
    pub particles: usize,
    pub sampling: SamplingKind,
    pub beta: f64,
    pub max_iters: usize,
    pub encounter_model: EncounterSource,
    pub bluetooth_threshold: f64,
    pub wifi_threshold: f64,
    pub top_n: usize,
    pub sigma_l: f64,
    pub sigma_phi: f64,
    pub step_length: f64,
    /// Noise variance of building-anchor measurements.
    pub building_r_var: f64,
    /// Overrides the calibrated encounter variance when set.
    pub encounter_r_var: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub p0: f64,
    pub steps: usize,
    /// Pairs farther apart than this never exchange radio readings.
    pub encounter_range: f64,
    /// Steps before the same pair may register another encounter.
    pub encounter_cooldown: usize,
    pub trigger_radius: f64,
    pub measurement_mode: MeasurementMode,
    pub human_anchors: bool,
    pub min_separation: f64,
    /// When set, every particle map starts with a surveyed copy of the
    /// building anchors, each displaced by N(0, std²) per axis and carrying
    /// that variance. Unset means the map is learned from scratch.
    pub prior_map_std: Option<f64>,
    pub radio: RadioParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_agents: 23,
            width: 50.0,
            height: 60.0,
            n_building_anchors: 30,
            particles: 75,
            sampling: SamplingKind::Iterative,
            beta: 0.1,
            max_iters: 10,
            encounter_model: EncounterSource::Wifi,
            bluetooth_threshold: -90.0,
            wifi_threshold: 8.0,
            top_n: 5,
            sigma_l: 0.05,
            sigma_phi: 0.0015,
            step_length: 0.7,
            building_r_var: 0.25,
            encounter_r_var: None,
            confusion: ConfusionMatrix::symmetric(3, 0.9).expect("valid default confusion"),
            p0: 0.1,
            steps: 2000,
            encounter_range: 6.0,
            encounter_cooldown: 20,
            trigger_radius: 1.5,
            measurement_mode: MeasurementMode::Range,
            human_anchors: true,
            min_separation: 2.0,
            prior_map_std: None,
            radio: RadioParams::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), SimError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::Config(format!(
            "{name} must be positive and finite (got {v})"
        )))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), SimError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} must be >= 0 (got {v})")))
    }
}

fn at_least_one(name: &str, v: usize) -> Result<(), SimError> {
    if v >= 1 {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} must be >= 1")))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        at_least_one("n_agents", self.n_agents)?;
        at_least_one("particles", self.particles)?;
        at_least_one("steps", self.steps)?;
        at_least_one("top_n", self.top_n)?;
        at_least_one("max_iters", self.max_iters)?;
        positive("width", self.width)?;
        positive("height", self.height)?;
        positive("beta", self.beta)?;
        positive("wifi_threshold", self.wifi_threshold)?;
        positive("step_length", self.step_length)?;
        positive("building_r_var", self.building_r_var)?;
        positive("p0", self.p0)?;
        positive("encounter_range", self.encounter_range)?;
        positive("trigger_radius", self.trigger_radius)?;
        non_negative("sigma_l", self.sigma_l)?;
        non_negative("sigma_phi", self.sigma_phi)?;
        non_negative("min_separation", self.min_separation)?;
        if let Some(s) = self.prior_map_std {
            non_negative("prior_map_std", s)?;
        }
        if let Some(r) = self.encounter_r_var {
            positive("encounter_r_var", r)?;
        }
        if !(-120.0..=0.0).contains(&self.bluetooth_threshold) {
            return Err(SimError::Config(format!(
                "bluetooth_threshold must lie in [-120, 0] (got {})",
                self.bluetooth_threshold
            )));
        }
        let r = &self.radio;
        non_negative("radio.wifi_noise", r.wifi_noise)?;
        non_negative("radio.bt_noise", r.bt_noise)?;
        positive("radio.ap_path_loss", r.ap_path_loss)?;
        positive("radio.bt_path_loss", r.bt_path_loss)?;
        at_least_one("radio.calibration_samples", r.calibration_samples)?;
        Ok(())
    }

    pub fn sampling_mode(&self) -> SamplingMode {
        match self.sampling {
            SamplingKind::OneShot => SamplingMode::OneShot,
            SamplingKind::Iterative => SamplingMode::Iterative {
                beta: self.beta,
                max_iters: self.max_iters,
            },
        }
    }

    pub fn slam_config(&self) -> SlamConfig {
        SlamConfig {
            noise: NoiseParams {
                sigma_l: self.sigma_l,
                sigma_phi: self.sigma_phi,
                r_var: self.building_r_var,
            },
            mode: self.measurement_mode,
            sampling: self.sampling_mode(),
            confusion: self.confusion.clone(),
            p0: self.p0,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}
