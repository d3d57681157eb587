//! Single-document JSON checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelParams, Result, RiskModel, LAYER_NAMES};
use crate::corpus::FeaturizerConfig;
use crate::diffmath::DenseLayer;

pub const CHECKPOINT_VERSION: i64 = 1;

/// A trained model plus the featurizer it was trained with (absent when the
/// features came from an external embedding file).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: RiskModel,
    pub featurizer: Option<FeaturizerConfig>,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: i64,
    config: ModelConfig,
    #[serde(default)]
    featurizer: Option<FeaturizerConfig>,
    params: BTreeMap<String, Tensor>,
}

fn corrupted(path: &Path, message: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        message: message.into(),
    }
}

pub fn to_json(checkpoint: &Checkpoint) -> String {
    let mut params = BTreeMap::new();
    for (name, layer) in LAYER_NAMES.iter().zip(checkpoint.model.params.layers()) {
        params.insert(
            format!("{name}.weight"),
            Tensor {
                shape: vec![layer.len_out, layer.len_in],
                data: layer.weights.clone(),
            },
        );
        params.insert(
            format!("{name}.bias"),
            Tensor {
                shape: vec![layer.len_out, 1],
                data: layer.bias.clone(),
            },
        );
    }
    let doc = Document {
        version: CHECKPOINT_VERSION,
        config: checkpoint.model.config.clone(),
        featurizer: checkpoint.featurizer,
        params,
    };
    // serializing plain maps of numbers cannot fail
    serde_json::to_string_pretty(&doc).expect("checkpoint serialization") + "\n"
}

pub fn from_json(text: &str, path: &Path) -> Result<Checkpoint> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| corrupted(path, e.to_string()))?;
    match value.get("version").and_then(serde_json::Value::as_i64) {
        Some(CHECKPOINT_VERSION) => {}
        Some(found) => {
            return Err(ModelError::Version {
                found,
                supported: CHECKPOINT_VERSION,
            })
        }
        None => return Err(corrupted(path, "missing integer \"version\" field")),
    }
    let mut doc: Document =
        serde_json::from_value(value).map_err(|e| corrupted(path, e.to_string()))?;
    let mut params = ModelParams::zeros(&doc.config);
    for (name, layer) in LAYER_NAMES.iter().zip(params.layers_mut()) {
        let mut take = |suffix: &str, shape: [usize; 2]| -> Result<Vec<f64>> {
            let key = format!("{name}.{suffix}");
            let tensor = doc
                .params
                .remove(&key)
                .ok_or_else(|| corrupted(path, format!("missing tensor {key}")))?;
            if tensor.shape != shape || tensor.data.len() != shape[0] * shape[1] {
                return Err(corrupted(
                    path,
                    format!(
                        "tensor {key} has shape {:?} with {} values, expected {shape:?}",
                        tensor.shape,
                        tensor.data.len()
                    ),
                ));
            }
            Ok(tensor.data)
        };
        let weights = take("weight", [layer.len_out, layer.len_in])?;
        let bias = take("bias", [layer.len_out, 1])?;
        *layer = DenseLayer::from_parts(layer.len_in, layer.len_out, weights, bias)?;
    }
    if let Some(extra) = doc.params.keys().next() {
        return Err(corrupted(path, format!("unexpected tensor {extra}")));
    }
    let model = RiskModel::from_parts(doc.config, params)?;
    Ok(Checkpoint {
        model,
        featurizer: doc.featurizer,
    })
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, to_json(checkpoint)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text, path)
}
