use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use super::{Pose, SlamError};

/// Range: scalar distance to the anchor. Offset: anchor position minus user
/// position as a 2-vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    #[default]
    Range,
    Offset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    Range(f64),
    Offset(Vector2<f64>),
}

impl Measurement {
    pub fn mode(&self) -> MeasurementMode {
        match self {
            Measurement::Range(_) => MeasurementMode::Range,
            Measurement::Offset(_) => MeasurementMode::Offset,
        }
    }
}

/// Below this separation the range Jacobian is undefined.
pub const MIN_RANGE_SEPARATION: f64 = 1e-9;

pub fn predict_measurement(pose: &Pose, anchor_mu: &Vector2<f64>, mode: MeasurementMode) -> Measurement {
    let d = anchor_mu - pose.position();
    match mode {
        MeasurementMode::Range => Measurement::Range(d.norm()),
        MeasurementMode::Offset => Measurement::Offset(d),
    }
}

/// Derivatives of the measurement with respect to the user position (`J_s`)
/// and the anchor position (`J_n`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jacobians {
    /// `J_n` is the unit row pointing from user to anchor; `J_s = −J_n`.
    Range { j_n: RowVector2<f64> },
    /// `J_n = I`, `J_s = −I`.
    Offset,
}

impl Jacobians {
    pub fn j_s_offset() -> Matrix2<f64> {
        -Matrix2::identity()
    }
}

pub fn measurement_jacobians(
    pose: &Pose,
    anchor_mu: &Vector2<f64>,
    mode: MeasurementMode,
) -> Result<Jacobians, SlamError> {
    match mode {
        MeasurementMode::Offset => Ok(Jacobians::Offset),
        MeasurementMode::Range => {
            let d = anchor_mu - pose.position();
            let r = d.norm();
            if r < MIN_RANGE_SEPARATION {
                return Err(SlamError::DegenerateGeometry);
            }
            Ok(Jacobians::Range {
                j_n: (d / r).transpose(),
            })
        }
    }
}
