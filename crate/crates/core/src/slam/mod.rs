//! Per-user particle-filter SLAM.
//!
//! Each particle carries a pose, a pose covariance, an importance weight and
//! its own anchor map. Human encounters refine particle positions against a
//! partner's published estimate; building anchors additionally drive data
//! association, map updates and resampling.

mod association;
mod convergence;
pub mod linalg;
mod map;
mod measurement;
mod particle;
mod pose;
mod proposal;
mod state;

use thiserror::Error;

pub use association::{association_likelihoods, AssociationResult};
pub use convergence::{contraction_matrix, expected_error_contraction};
pub use map::{AnchorEstimate, AnchorKind, ConfusionMatrix};
pub use measurement::{
    measurement_jacobians, predict_measurement, Jacobians, Measurement, MeasurementMode, MIN_RANGE_SEPARATION,
};
pub use particle::{map_update, motion_update, update_weight, MapChange, NoiseParams, Particle};
pub use pose::{wrap_angle, ControlInput, Pose};
pub use proposal::{refine_particle_position, refine_particle_position_iterated, Proposal};
pub use state::{
    correct, estimate_error, iterative_human_update, normalize_and_resample, one_shot_human_update, predict, slam_step,
    Diagnostics, Observation, PublishedEstimate, SamplingMode, SlamConfig, SlamState, StepOutcome,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SlamError {
    #[error("range measurement with user and anchor at the same point")]
    DegenerateGeometry,
    #[error("{0} is singular")]
    Singular(&'static str),
    #[error("anchor index {index} out of range for a map of {len}")]
    AnchorIndex { index: usize, len: usize },
    #[error("measurement mode {got:?} does not match configured {expected:?}")]
    ModeMismatch {
        expected: MeasurementMode,
        got: MeasurementMode,
    },
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("invalid confusion matrix: {0}")]
    InvalidConfusion(String),
    #[error("a filter needs at least one particle")]
    NoParticles,
    #[error("snapshot: {0}")]
    Snapshot(String),
}
