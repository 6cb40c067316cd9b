//! Mini-batch training loop with SGD or Adam, deliberately able to memorize
//! noisy labels when run long enough.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grad::gradients_on;
use super::{dataset_matrix, TrainedModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// L2 penalty weight; added to the loss gradient as `lambda * w`, so one
    /// SGD step shrinks a zero-gradient parameter by exactly
    /// `1 - learning_rate * lambda`.
    pub weight_decay: f64,
    pub optimizer: Optimizer,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 32,
            weight_decay: 0.0,
            optimizer: Optimizer::Adam,
        }
    }
}

/// A trained model plus the training-run summary.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    /// Accuracy on the training set after the final epoch.
    pub final_train_accuracy: f64,
    /// Mean cross-entropy over the final epoch.
    pub final_mean_loss: f64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: u64,
}

impl AdamState {
    fn new(model: &TrainedModel) -> Self {
        AdamState {
            m_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            step: 0,
        }
    }
}

/// Train a model on `members` with the given spec and config.
///
/// Deterministic given `(spec.seed, config)`: initialization and the
/// per-epoch shuffle both draw from streams derived from `spec.seed`.
/// Returns a training error naming the epoch if the loss goes non-finite.
pub fn train(members: &Dataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    spec.validate()?;
    if members.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if members.dims != spec.input_dims() {
        return Err(Error::invalid(format!(
            "dataset dims {} do not match spec input {}",
            members.dims,
            spec.input_dims()
        )));
    }
    if members.classes > spec.classes() {
        return Err(Error::invalid(format!(
            "dataset has {} classes but spec outputs {}",
            members.classes,
            spec.classes()
        )));
    }

    let mut model = TrainedModel::initialize(spec)?;
    let x = dataset_matrix(members);
    let labels: Vec<usize> = members.samples.iter().map(|s| s.label).collect();
    let n = members.len();

    let mut shuffle_rng = seeds::rng_for(spec.seed, 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::new(&model);
    let mut epoch_loss = 0.0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let bx = Array2::from_shape_fn((chunk.len(), members.dims), |(i, j)| {
                x[[chunk[i], j]]
            });
            let blabels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (grads, loss) = gradients_on(&model, bx.view(), &blabels);
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("loss became {loss}"),
                });
            }
            epoch_loss += loss;
            batches += 1;
            apply_update(&mut model, &grads, config, &mut adam);
        }
        epoch_loss /= batches as f64;
        // The cross-entropy clamp keeps the reported loss finite even when
        // parameters overflow, so divergence must be caught on the
        // parameters themselves.
        if model
            .weights
            .iter()
            .any(|w| w.iter().any(|v| !v.is_finite()))
            || model.biases.iter().any(|b| b.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Training {
                epoch,
                message: "parameters became non-finite".to_string(),
            });
        }
    }

    let final_train_accuracy = model.accuracy(members)?;
    Ok(TrainOutcome {
        model,
        final_train_accuracy,
        final_mean_loss: epoch_loss,
    })
}

fn apply_update(
    model: &mut TrainedModel,
    grads: &super::Gradients,
    config: &TrainConfig,
    adam: &mut AdamState,
) {
    let lr = config.learning_rate;
    let wd = config.weight_decay;
    match config.optimizer {
        Optimizer::Sgd => {
            for (w, g) in model.weights.iter_mut().zip(&grads.weights) {
                w.zip_mut_with(g, |w, &g| *w -= lr * (g + wd * *w));
            }
            for (b, g) in model.biases.iter_mut().zip(&grads.biases) {
                b.zip_mut_with(g, |b, &g| *b -= lr * g);
            }
        }
        Optimizer::Adam => {
            adam.step += 1;
            let t = adam.step as f64;
            let bc1 = 1.0 - ADAM_BETA1.powf(t);
            let bc2 = 1.0 - ADAM_BETA2.powf(t);
            for l in 0..model.weights.len() {
                let w = &mut model.weights[l];
                let m = &mut adam.m_w[l];
                let v = &mut adam.v_w[l];
                ndarray::Zip::from(w)
                    .and(m)
                    .and(v)
                    .and(&grads.weights[l])
                    .for_each(|w, m, v, &g| {
                        let g = g + wd * *w;
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                    });
                let b = &mut model.biases[l];
                let m = &mut adam.m_b[l];
                let v = &mut adam.v_b[l];
                ndarray::Zip::from(b)
                    .and(m)
                    .and(v)
                    .and(&grads.biases[l])
                    .for_each(|b, m, v, &g| {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        *b -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                    });
            }
        }
    }
}
