use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::{ConvergenceConfig, HarnessError};
use crate::sim::SimConfig;

/// The parameter being varied and the values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// A `SimConfig` field, dotted for nested ones (`radio.bt_noise`).
    pub param: String,
    pub values: Vec<Value>,
}

/// A sweep: the base configuration, one axis, and the seeds shared by every
/// value on that axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub base: SimConfig,
    pub sweep: SweepAxis,
    #[serde(default = "default_seeds")]
    pub n_seeds: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_seeds() -> u64 {
    10
}

impl ExperimentSpec {
    /// Config for one cell. Seeds are `base.seed + k` so that every value
    /// sees the same environments and trajectories.
    pub fn cell(&self, value: &Value, k: u64) -> Result<SimConfig, String> {
        let mut cfg = set_param(&self.base, &self.sweep.param, value)?;
        cfg.seed = self.base.seed + k;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_seeds == 0 {
            return Err("n_seeds must be >= 1".into());
        }
        if self.sweep.values.is_empty() {
            return Err("sweep.values is empty".into());
        }
        self.base.validate().map_err(|e| e.to_string())?;
        for v in &self.sweep.values {
            let cfg = set_param(&self.base, &self.sweep.param, v)?;
            cfg.validate().map_err(|e| format!("sweep value {v}: {e}"))?;
        }
        Ok(())
    }
}

/// Returns `base` with the (possibly dotted) field `param` set to `value`.
/// Unknown fields and ill-typed values are rejected with the field name.
pub fn set_param(base: &SimConfig, param: &str, value: &Value) -> Result<SimConfig, String> {
    let mut table = Table::try_from(base).map_err(|e| e.to_string())?;
    let mut keys: Vec<&str> = param.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or("empty sweep parameter")?;
    let mut node = &mut table;
    for k in &keys {
        node = match node.get_mut(*k) {
            Some(Value::Table(t)) => t,
            _ => return Err(format!("sweep parameter `{param}` is not a config field")),
        };
    }
    // Optional fields are absent from the serialized table when unset.
    let optional = ["encounter_r_var", "prior_map_std"];
    if !node.contains_key(last) && !(keys.is_empty() && optional.contains(&last)) {
        return Err(format!("sweep parameter `{param}` is not a config field"));
    }
    node.insert(last.to_string(), value.clone());
    table
        .try_into::<SimConfig>()
        .map_err(|e| format!("sweep parameter `{param}` = {value}: {}", e.message()))
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn config_error(path: &Path, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Parses a simulation config. `origin` only labels error messages.
pub fn parse_config(text: &str, origin: &Path) -> Result<SimConfig, HarnessError> {
    let cfg: SimConfig = toml::from_str(text).map_err(|e| config_error(origin, e.to_string()))?;
    cfg.validate().map_err(|e| config_error(origin, e.to_string()))?;
    Ok(cfg)
}

pub fn parse_experiment(text: &str, origin: &Path) -> Result<ExperimentSpec, HarnessError> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| config_error(origin, e.to_string()))?;
    spec.validate().map_err(|e| config_error(origin, e))?;
    Ok(spec)
}

/// Reads a TOML simulation config; missing keys take their defaults.
pub fn load_config(path: &Path) -> Result<SimConfig, HarnessError> {
    parse_config(&read(path)?, path)
}

/// Reads a TOML sweep description (`[base]`, `[sweep]`, `n_seeds`, `out_dir`).
pub fn load_experiment(path: &Path) -> Result<ExperimentSpec, HarnessError> {
    parse_experiment(&read(path)?, path)
}

pub fn parse_convergence(text: &str, origin: &Path) -> Result<ConvergenceConfig, HarnessError> {
    let cfg: ConvergenceConfig = toml::from_str(text).map_err(|e| config_error(origin, e.to_string()))?;
    cfg.validate().map_err(|e| config_error(origin, e))?;
    Ok(cfg)
}

/// Reads a TOML convergence-study config; missing keys take their defaults.
pub fn load_convergence(path: &Path) -> Result<ConvergenceConfig, HarnessError> {
    parse_convergence(&read(path)?, path)
}
