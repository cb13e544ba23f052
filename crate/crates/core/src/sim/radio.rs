use std::collections::BTreeMap;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{BluetoothChannel, Environment, SimConfig, SimError};
use crate::encounter::{
    fit_log_model, fit_quadratic_model, model_rmse, wifi_similarity, DistanceModel, EncounterSource, WifiScan, RSS_MAX,
    RSS_MIN,
};

/// Weakest AP reading a scan reports.
pub const WIFI_SENSITIVITY: f64 = -100.0;
pub const WIFI_NEAR_FIELD: f64 = 0.5;
pub const BT_NEAR_FIELD: f64 = 0.1;

fn gaussian<R: Rng + ?Sized>(std: f64, rng: &mut R) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("finite std").sample(rng)
    } else {
        0.0
    }
}

/// Mean received power under log-distance path loss.
pub fn path_loss_rss(tx_power: f64, gamma: f64, d: f64, near_field: f64) -> f64 {
    tx_power - 10.0 * gamma * d.max(near_field).log10()
}

pub fn synthesize_wifi_scan<R: Rng + ?Sized>(
    env: &Environment,
    position: &Vector2<f64>,
    timestamp: u64,
    rng: &mut R,
) -> WifiScan {
    let mut readings = BTreeMap::new();
    for ap in &env.access_points {
        let d = (ap.position - position).norm();
        let rss = (path_loss_rss(ap.tx_power, ap.path_loss_exponent, d, WIFI_NEAR_FIELD)
            + gaussian(env.wifi_noise_std, rng))
        .clamp(RSS_MIN, RSS_MAX);
        if rss >= WIFI_SENSITIVITY {
            readings.insert(ap.id, rss);
        }
    }
    WifiScan::new(readings, timestamp).expect("readings are clipped into range")
}

pub fn synthesize_bluetooth_rss<R: Rng + ?Sized>(distance: f64, channel: &BluetoothChannel, rng: &mut R) -> f64 {
    (path_loss_rss(channel.tx_power, channel.path_loss_exponent, distance, BT_NEAR_FIELD)
        + gaussian(channel.noise_std, rng))
    .clamp(RSS_MIN, RSS_MAX)
}

/// Fitted distance model plus the samples it was fit to.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub model: DistanceModel,
    /// `(signal, true distance)` for every detected calibration pair.
    pub samples: Vec<(f64, f64)>,
}

/// Random pair of points inside the building at most `range` apart, with
/// separations distributed like two uniformly placed walkers.
fn calibration_pair<R: Rng + ?Sized>(env: &Environment, range: f64, rng: &mut R) -> (Vector2<f64>, Vector2<f64>, f64) {
    loop {
        let p = Vector2::new(rng.random_range(0.0..=env.width), rng.random_range(0.0..=env.height));
        let d = range * rng.random::<f64>().sqrt();
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let q = p + Vector2::new(a.cos(), a.sin()) * d;
        if env.contains(&q) {
            return (p, q, d);
        }
    }
}

/// Fits the configured encounter model to pairs within the encounter range
/// that the model's threshold would detect.
pub fn calibrate<R: Rng + ?Sized>(env: &Environment, config: &SimConfig, rng: &mut R) -> Result<Calibration, SimError> {
    let mut samples = Vec::with_capacity(config.radio.calibration_samples);
    for _ in 0..config.radio.calibration_samples {
        let (p, q, d) = calibration_pair(env, config.encounter_range, rng);
        match config.encounter_model {
            EncounterSource::Bluetooth => {
                let rss = synthesize_bluetooth_rss(d, &env.bluetooth, rng);
                if rss >= config.bluetooth_threshold {
                    samples.push((rss, d));
                }
            }
            EncounterSource::Wifi => {
                let a = synthesize_wifi_scan(env, &p, 0, rng);
                let b = synthesize_wifi_scan(env, &q, 0, rng);
                if let Some(sim) = wifi_similarity(&a, &b, config.top_n) {
                    if sim > 0.0 && sim <= config.wifi_threshold {
                        samples.push((sim, d));
                    }
                }
            }
        }
    }
    let fit_err = |e| SimError::Calibration(format!("{e}"));
    let model = match config.encounter_model {
        EncounterSource::Bluetooth => {
            let m = fit_quadratic_model(&samples).map_err(fit_err)?;
            let rmse = model_rmse(&DistanceModel::quadratic(m, 0.0), &samples).map_err(fit_err)?;
            DistanceModel::quadratic(m, rmse)
        }
        EncounterSource::Wifi => {
            let m = fit_log_model(&samples).map_err(fit_err)?;
            let rmse = model_rmse(&DistanceModel::log(m, 0.0), &samples).map_err(fit_err)?;
            DistanceModel::log(m, rmse)
        }
    };
    Ok(Calibration { model, samples })
}
