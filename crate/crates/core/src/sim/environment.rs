use nalgebra::Vector2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::streams::{stream_rng, Stream};
use super::{SimConfig, SimError};
use crate::slam::AnchorKind;

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingAnchor {
    pub id: usize,
    pub position: Vector2<f64>,
    pub kind: AnchorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub id: u32,
    pub position: Vector2<f64>,
    pub tx_power: f64,
    pub path_loss_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BluetoothChannel {
    pub tx_power: f64,
    pub path_loss_exponent: f64,
    pub noise_std: f64,
}

/// The simulated building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub width: f64,
    pub height: f64,
    /// Reference point where every user starts.
    pub entrance: Vector2<f64>,
    pub building_anchors: Vec<BuildingAnchor>,
    pub access_points: Vec<AccessPoint>,
    pub wifi_noise_std: f64,
    pub bluetooth: BluetoothChannel,
}

impl Environment {
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }
}

/// Places `n` points uniformly in the rectangle, each at least `sep` from
/// all earlier ones.
fn place<R: Rng + ?Sized>(
    n: usize,
    width: f64,
    height: f64,
    sep: f64,
    what: &str,
    rng: &mut R,
) -> Result<Vec<Vector2<f64>>, SimError> {
    let mut out: Vec<Vector2<f64>> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        if attempts >= MAX_PLACEMENT_ATTEMPTS {
            return Err(SimError::Config(format!(
                "cannot place {n} {what} {sep} m apart in a {width}x{height} m area"
            )));
        }
        attempts += 1;
        let p = Vector2::new(rng.random_range(0.0..=width), rng.random_range(0.0..=height));
        if out.iter().all(|q| (p - q).norm() >= sep) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Building anchors, their kinds and access points are drawn from separate
/// streams, so a smaller anchor count yields a prefix of a larger one and the
/// radio map does not move.
pub fn generate_environment(config: &SimConfig) -> Result<Environment, SimError> {
    config.validate()?;
    let kinds = config.confusion.n_kinds();
    let mut rng = stream_rng(config.seed, Stream::BuildingAnchors, 0);
    let mut kind_rng = stream_rng(config.seed, Stream::BuildingAnchors, 1);
    let anchors = place(
        config.n_building_anchors,
        config.width,
        config.height,
        config.min_separation,
        "building anchors",
        &mut rng,
    )?
    .into_iter()
    .enumerate()
    .map(|(id, position)| BuildingAnchor {
        id,
        position,
        kind: AnchorKind(kind_rng.random_range(0..kinds)),
    })
    .collect();

    let radio = &config.radio;
    let mut rng = stream_rng(config.seed, Stream::AccessPoints, 0);
    let access_points = place(
        radio.n_access_points,
        config.width,
        config.height,
        config.min_separation,
        "access points",
        &mut rng,
    )?
    .into_iter()
    .enumerate()
    .map(|(id, position)| AccessPoint {
        id: id as u32,
        position,
        tx_power: radio.ap_tx_power,
        path_loss_exponent: radio.ap_path_loss,
    })
    .collect();

    Ok(Environment {
        width: config.width,
        height: config.height,
        entrance: Vector2::new(config.width / 2.0, 0.5f64.min(config.height / 2.0)),
        building_anchors: anchors,
        access_points,
        wifi_noise_std: radio.wifi_noise,
        bluetooth: BluetoothChannel {
            tx_power: radio.bt_tx_power,
            path_loss_exponent: radio.bt_path_loss,
            noise_std: radio.bt_noise,
        },
    })
}
