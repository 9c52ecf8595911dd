//! Run configuration shared by every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::grid::{CountMode, GridSpec};
use crate::metrics::{DistanceMethod, Grouping};
use crate::output::fixed;
use crate::registry::{self, RegistryError};
use crate::roads::DEFAULT_TOLERANCE;
use crate::spectrum::{SignalChannel, Window};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("`{key}` must be {requirement}, got {value}")]
    OutOfRange { key: &'static str, requirement: &'static str, value: f64 },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("unknown channel `{0}`")]
    Channel(String),
}

/// Every tunable of a run. Defaults reproduce the reference behaviour:
/// path distance, no debounce, 1 m cells at the origin, per-sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub distance_method: String,
    pub min_dwell: f64,
    pub cell_size: f64,
    pub origin: [f64; 2],
    pub count_mode: String,
    pub match_tolerance: f64,
    pub resample_rate: f64,
    pub window: String,
    pub group_by: String,
    pub channel: String,
    /// Fan out across logs. Never changes output, so it is not reported.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            distance_method: "path".into(),
            min_dwell: 0.0,
            cell_size: 1.0,
            origin: [0.0, 0.0],
            count_mode: "sample".into(),
            match_tolerance: DEFAULT_TOLERANCE,
            resample_rate: 10.0,
            window: "hann".into(),
            group_by: "log".into(),
            channel: "speed".into(),
            parallel: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, path: &str) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: name.clone(), source })?;
        RunConfig::from_toml_str(&text, &name)
    }

    /// Checks numeric ranges and that every strategy name is registered.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |key, ok: bool, requirement, value| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange { key, requirement, value })
            }
        };
        check("min_dwell", self.min_dwell >= 0.0 && self.min_dwell.is_finite(), "finite and >= 0", self.min_dwell)?;
        check("cell_size", self.cell_size > 0.0 && self.cell_size.is_finite(), "finite and > 0", self.cell_size)?;
        for (i, o) in self.origin.iter().enumerate() {
            check(["origin.x", "origin.y"][i], o.is_finite(), "finite", *o)?;
        }
        check(
            "match_tolerance",
            self.match_tolerance > 0.0 && self.match_tolerance.is_finite(),
            "finite and > 0",
            self.match_tolerance,
        )?;
        check(
            "resample_rate",
            self.resample_rate > 0.0 && self.resample_rate.is_finite(),
            "finite and > 0",
            self.resample_rate,
        )?;
        self.distance_method()?;
        self.count_mode()?;
        self.window()?;
        self.grouping()?;
        self.channel()?;
        Ok(())
    }

    pub fn distance_method(&self) -> Result<Box<dyn DistanceMethod>, ConfigError> {
        Ok(registry::distance_methods().create(&self.distance_method)?)
    }

    pub fn count_mode(&self) -> Result<Box<dyn CountMode>, ConfigError> {
        Ok(registry::count_modes().create(&self.count_mode)?)
    }

    pub fn window(&self) -> Result<Box<dyn Window>, ConfigError> {
        Ok(registry::windows().create(&self.window)?)
    }

    pub fn grouping(&self) -> Result<Box<dyn Grouping>, ConfigError> {
        Ok(registry::groupings().create(&self.group_by)?)
    }

    pub fn channel(&self) -> Result<SignalChannel, ConfigError> {
        SignalChannel::from_name(&self.channel).map_err(|_| ConfigError::Channel(self.channel.clone()))
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec { origin: self.origin, cell_size: self.cell_size }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "distance_method": self.distance_method,
            "min_dwell": fixed(self.min_dwell),
            "cell_size": fixed(self.cell_size),
            "origin": [fixed(self.origin[0]), fixed(self.origin[1])],
            "count_mode": self.count_mode,
            "match_tolerance": fixed(self.match_tolerance),
            "resample_rate": fixed(self.resample_rate),
            "window": self.window,
            "group_by": self.group_by,
            "channel": self.channel,
        })
    }
}
