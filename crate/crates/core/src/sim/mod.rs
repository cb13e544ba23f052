//! Multi-agent indoor world used as ground truth for the filter.

mod agents;
mod config;
mod detect;
mod environment;
mod radio;
mod run;
pub mod streams;

use thiserror::Error;

pub use agents::{
    advance_agent, advance_agents, observe_control, random_waypoint, reflect_heading, AgentTruth, StepControls,
};
pub use config::{RadioParams, SamplingKind, SimConfig};
pub use detect::{
    detect_building_anchor_event, detect_encounters, noisy_measurement, AnchorEvent, AnchorSensor, RadioReadings,
};
pub use environment::{
    generate_environment, AccessPoint, BluetoothChannel, BuildingAnchor, Environment, MAX_PLACEMENT_ATTEMPTS,
};
pub use radio::{
    calibrate, path_loss_rss, synthesize_bluetooth_rss, synthesize_wifi_scan, Calibration, BT_NEAR_FIELD,
    WIFI_NEAR_FIELD, WIFI_SENSITIVITY,
};
pub use run::{run_simulation, EventLog, EventRecord, EventTags, SimResult, SimStats, Timing};

use crate::slam::SlamError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("encounter model calibration failed: {0}")]
    Calibration(String),
    #[error("filter error at step {step}, agent {agent}: {source}")]
    Slam {
        step: usize,
        agent: usize,
        #[source]
        source: SlamError,
    },
}
