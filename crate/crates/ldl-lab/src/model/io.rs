//! Weight-file serialization.
//!
//! A model is stored as a JSON document with the layer dimensions,
//! activation names, and per-layer parameters (weights row-major). Numbers
//! round-trip exactly, so `load(save(m))` reproduces `m` bitwise.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, ModelSpec, TrainedModel};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format_version: u32,
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    seed: u64,
    /// One flat row-major matrix per layer, shape `(out, in)`.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Write a model to `path` as JSON.
pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let file = WeightsFile {
        format_version: FORMAT_VERSION,
        layer_dims: model.spec.layer_dims.clone(),
        activations: model.spec.activations.clone(),
        seed: model.spec.seed,
        weights: model
            .weights
            .iter()
            .map(|w| w.iter().cloned().collect())
            .collect(),
        biases: model.biases.iter().map(|b| b.to_vec()).collect(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Read a model back from a weight file.
pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let file: WeightsFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!("unsupported format_version {}", file.format_version),
        });
    }
    let spec = ModelSpec::new(file.layer_dims, file.activations, file.seed)?;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (l, pair) in spec.layer_dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let flat = file.weights.get(l).ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            message: format!("missing weights for layer {l}"),
        })?;
        if flat.len() != fan_in * fan_out {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: format!(
                    "layer {l} expects {} weights, found {}",
                    fan_in * fan_out,
                    flat.len()
                ),
            });
        }
        weights.push(
            Array2::from_shape_vec((fan_out, fan_in), flat.clone()).expect("length checked"),
        );
        let b = file.biases.get(l).ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            message: format!("missing biases for layer {l}"),
        })?;
        if b.len() != fan_out {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: format!("layer {l} expects {fan_out} biases, found {}", b.len()),
            });
        }
        biases.push(Array1::from_vec(b.clone()));
    }
    let model = TrainedModel {
        spec,
        weights,
        biases,
    };
    if model
        .weights
        .iter()
        .any(|w| w.iter().any(|v| !v.is_finite()))
        || model.biases.iter().any(|b| b.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "parameters must be finite".to_string(),
        });
    }
    Ok(model)
}
