use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{write_json, HarnessError};
use crate::encounter::{DistanceModel, EncounterSource};
use crate::sim::streams::{stream_rng, Stream};
use crate::sim::{calibrate, generate_environment, SimConfig};

/// A fitted model with its sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FittedModel {
    pub source: EncounterSource,
    pub model: DistanceModel,
    pub samples: usize,
}

/// Calibrates both encounter models in the configured environment, using
/// the same random stream a simulation would. With `out` set, writes
/// `<source>_samples.csv`, `<source>_model.toml` and `models.json`.
pub fn fit_models(config: &SimConfig, out: Option<&Path>) -> Result<Vec<FittedModel>, HarnessError> {
    let env = generate_environment(config)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut fitted = Vec::new();
    for source in [EncounterSource::Bluetooth, EncounterSource::Wifi] {
        let cfg = SimConfig {
            encounter_model: source,
            ..config.clone()
        };
        let cal = calibrate(&env, &cfg, &mut stream_rng(config.seed, Stream::Calibration, 0))?;
        let name = match source {
            EncounterSource::Bluetooth => "bluetooth",
            EncounterSource::Wifi => "wifi",
        };
        if let Some(dir) = out {
            let path = dir.join(format!("{name}_samples.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| HarnessError::io(&path, e.into()))?;
            let write = |w: &mut csv::Writer<fs::File>| -> Result<(), csv::Error> {
                w.write_record(["signal", "distance_m"])?;
                for (x, d) in &cal.samples {
                    w.write_record([x.to_string(), d.to_string()])?;
                }
                w.flush()?;
                Ok(())
            };
            write(&mut w).map_err(|e| HarnessError::io(&path, e.into()))?;
            let path = dir.join(format!("{name}_model.toml"));
            fs::write(&path, cal.model.to_text()).map_err(|e| HarnessError::io(&path, e))?;
        }
        fitted.push(FittedModel {
            source,
            model: cal.model,
            samples: cal.samples.len(),
        });
    }
    if let Some(dir) = out {
        write_json(&dir.join("models.json"), &fitted)?;
    }
    Ok(fitted)
}
