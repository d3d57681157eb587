//! Run configuration: one JSON document plus dotted `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::FeaturizerConfig;
use crate::llm_backend::BackendSpec;
use crate::refine::{RefineConfig, RiskSource};
use crate::risk_model::{ModelConfig, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("override {0:?} is not of the form key=value")]
    OverrideSyntax(String),
    #[error("override {key}: {message}")]
    Override { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Precomputed features keyed by example id; replaces the hashing featurizer.
    pub embeddings: Option<PathBuf>,
    pub rubric: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub adam: crate::diffmath::AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            train_fraction: 0.8,
            adam: t.adam,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: self.adam,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backends {
    pub refiner: Option<BackendSpec>,
    pub target: Option<BackendSpec>,
    pub judge: Option<BackendSpec>,
}

/// Where refinement gets its risk vector from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerSpec {
    /// The trained checkpoint.
    #[default]
    Model,
    /// Keyword-count stand-in; one keyword list per vocabulary category.
    Keywords(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every subsystem derives its own stream from it.
    pub seed: u64,
    pub paths: Paths,
    pub model: ModelConfig,
    pub featurizer: FeaturizerConfig,
    pub train: TrainSection,
    pub refine: RefineConfig,
    pub risk_source: RiskSource,
    pub scorer: ScorerSpec,
    pub backends: Backends,
    /// Worker threads for per-example work.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            model: ModelConfig::default(),
            featurizer: FeaturizerConfig::default(),
            train: TrainSection::default(),
            refine: RefineConfig::default(),
            risk_source: RiskSource::default(),
            scorer: ScorerSpec::default(),
            backends: Backends::default(),
            jobs: 1,
        }
    }
}

/// Parses a `--set` value: JSON when it parses, a bare string otherwise.
fn override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn apply_override(doc: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::OverrideSyntax(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::OverrideSyntax(spec.to_string()));
    }
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just created")
            }
            _ => {
                return Err(ConfigError::Override {
                    key: key.to_string(),
                    message: format!("{} is not an object", parts[..i].join(".")),
                })
            }
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), override_value(raw));
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("key has at least one segment")
}

impl RunConfig {
    /// File (if any) over defaults, then overrides in order.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc = match file {
            None => serde_json::to_value(RunConfig::default()).expect("default serializes"),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?
            }
        };
        for spec in overrides {
            apply_override(&mut doc, spec)?;
        }
        let origin = file.map_or_else(|| "<defaults>".to_string(), |p| p.display().to_string());
        let config: RunConfig = serde_json::from_value(doc).map_err(|e| ConfigError::Parse {
            path: origin,
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Model config with the root seed applied.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed,
            ..self.model.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.model_config().validate().map_err(|e| invalid(&e))?;
        self.featurizer.validate().map_err(|e| invalid(&e))?;
        self.refine.validate().map_err(|e| invalid(&e))?;
        if self.jobs == 0 {
            return Err(ConfigError::Invalid("jobs must be at least 1".into()));
        }
        if !(self.train.train_fraction > 0.0 && self.train.train_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "train.train_fraction {} is outside (0, 1)",
                self.train.train_fraction
            )));
        }
        if self.train.batch_size == 0 {
            return Err(ConfigError::Invalid(
                "train.batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
