//! Merged run configuration: JSON file plus flat dotted-key command-line
//! overrides (`--set train.epochs=2`). Every field has a default except the
//! dataset paths; unknown keys anywhere are a hard error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::ChannelMode;
use crate::model::MlrnConfig;
use crate::training::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("config: {0}")]
    Parse(String),
    #[error("override '{0}' is not of the form key.path=value")]
    BadOverride(String),
    #[error("missing required setting: {0}")]
    Missing(&'static str),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory of HR training PNGs (or a dataset root containing `HR/`).
    pub hr_dir: Option<String>,
    /// Optional directory of pre-generated LR PNGs with matching stems.
    pub lr_dir: Option<String>,
    /// Optional held-out validation HR directory; defaults to the last 10
    /// ingested training images when absent.
    pub val_hr_dir: Option<String>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub mode: ChannelMode,
    /// Border shave in pixels; defaults to the scale factor.
    pub shave: Option<usize>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            mode: ChannelMode::Y,
            shave: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: MlrnConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub metrics: MetricsConfig,
}

impl RunConfig {
    /// Load from an optional JSON file and apply `key.path=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let mut value: serde_json::Value = match path {
            Some(p) => {
                let raw = std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?;
                serde_json::from_str(&raw).map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => serde_json::json!({}),
        };
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        // deny_unknown_fields turns typos into hard errors here.
        serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Serialize the effective config (echoed into the run directory so the
    /// run can be reproduced by reloading it).
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn require_hr_dir(&self) -> Result<PathBuf, ConfigError> {
        self.data
            .hr_dir
            .as_ref()
            .map(PathBuf::from)
            .ok_or(ConfigError::Missing("data.hr_dir"))
    }

    /// Effective metric shave: explicit setting or the scale factor.
    pub fn effective_shave(&self) -> usize {
        self.metrics.shave.unwrap_or(self.model.scale)
    }
}

fn apply_override(root: &mut serde_json::Value, entry: &str) -> Result<(), ConfigError> {
    let (path, raw_value) = entry
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(entry.to_string()))?;
    if path.is_empty() {
        return Err(ConfigError::BadOverride(entry.to_string()));
    }
    // Values parse as JSON when possible (numbers, booleans, null), and
    // fall back to plain strings (paths, labels).
    let value: serde_json::Value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));

    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for segment in &segments[..segments.len() - 1] {
        if !node.is_object() {
            return Err(ConfigError::BadOverride(entry.to_string()));
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(segment.to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(segments.last().unwrap().to_string(), value);
            Ok(())
        }
        None => Err(ConfigError::BadOverride(entry.to_string())),
    }
}
