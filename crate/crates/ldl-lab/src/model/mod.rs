//! Minimal dense feedforward classifier: forward pass to logits, softmax,
//! cross-entropy, exact backpropagation, and a training loop capable of
//! deliberate overfitting.
//!
//! All arithmetic is 64-bit. Models are immutable after training; forward
//! and gradient operations are read-only and safe to call concurrently.

mod grad;
mod io;
mod train;

pub use grad::{gradients, input_gradient, Gradients};
pub use io::{load_model, save_model};
pub use train::{train, Optimizer, TrainConfig, TrainOutcome};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Derivative evaluated from the pre-activation value.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Architecture description: layer widths `[d, h1, ..., c]`, one activation
/// per hidden layer, and the seed for parameter initialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(layer_dims: Vec<usize>, activations: Vec<Activation>, seed: u64) -> Result<Self> {
        let spec = ModelSpec {
            layer_dims,
            activations,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::invalid("layer_dims needs at least input and output"));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("all layer dims must be positive"));
        }
        let hidden = self.layer_dims.len() - 2;
        if self.activations.len() != hidden {
            return Err(Error::invalid(format!(
                "expected {hidden} activations for {hidden} hidden layers, got {}",
                self.activations.len()
            )));
        }
        Ok(())
    }

    pub fn input_dims(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }
}

/// A trained (or freshly initialized) classifier: per-layer weight matrices
/// of shape `(out, in)` and bias vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl TrainedModel {
    /// Glorot-uniform initialized model: weights uniform in
    /// `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`, biases zero.
    pub fn initialize(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        use rand::Rng;
        let mut rng = crate::seeds::rng_from(spec.seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in spec.layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-bound..bound)
            });
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(TrainedModel {
            spec: spec.clone(),
            weights,
            biases,
        })
    }

    pub fn input_dims(&self) -> usize {
        self.spec.input_dims()
    }

    pub fn classes(&self) -> usize {
        self.spec.classes()
    }

    fn check_input(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.input_dims() {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.input_dims(),
                features.len()
            )));
        }
        Ok(())
    }

    /// Logit vector for a single input.
    pub fn forward_logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_input(features)?;
        let x = ArrayView2::from_shape((1, features.len()), features)
            .expect("shape checked");
        let logits = self.forward_batch(x);
        Ok(logits.row(0).to_vec())
    }

    /// Logits for a batch of inputs, one row per input. Rows must already
    /// have the model's input width.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut a = inputs.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(&w.t());
            z += b;
            if l < last {
                self.spec.activations[l].apply(&mut z);
            }
            a = z;
        }
        a
    }

    /// Forward pass retaining pre-activations per layer; used by backprop.
    fn forward_trace(&self, inputs: ArrayView2<'_, f64>) -> ForwardTrace {
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(self.weights.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.weights.len());
        let mut a = inputs.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(&w.t());
            z += b;
            pre.push(z.clone());
            if l < last {
                self.spec.activations[l].apply(&mut z);
            }
            post.push(z.clone());
            a = z;
        }
        ForwardTrace { pre, post }
    }

    /// Fraction of samples whose argmax logit equals the label, ties broken
    /// toward the lowest class index.
    pub fn accuracy(&self, dataset: &Dataset) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::invalid("accuracy over an empty dataset"));
        }
        if dataset.dims != self.input_dims() {
            return Err(Error::invalid(format!(
                "dataset dims {} do not match model input {}",
                dataset.dims,
                self.input_dims()
            )));
        }
        let x = dataset_matrix(dataset);
        let logits = self.forward_batch(x.view());
        let correct = logits
            .axis_iter(Axis(0))
            .zip(&dataset.samples)
            .filter(|(row, sample)| argmax(row.as_slice().unwrap()) == sample.label)
            .count();
        Ok(correct as f64 / dataset.len() as f64)
    }
}

struct ForwardTrace {
    /// Pre-activation values per layer.
    pre: Vec<Array2<f64>>,
    /// Post-activation values per layer (last layer: raw logits).
    post: Vec<Array2<f64>>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Stack a dataset's features into an `(n, d)` matrix.
pub fn dataset_matrix(dataset: &Dataset) -> Array2<f64> {
    let mut x = Array2::zeros((dataset.len(), dataset.dims));
    for (i, sample) in dataset.samples.iter().enumerate() {
        x.row_mut(i)
            .assign(&ndarray::ArrayView1::from(&sample.features[..]));
    }
    x
}

/// Numerically stable softmax: shifts by the max logit before
/// exponentiating, so arbitrarily large logits cannot overflow.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::domain("softmax of an empty logit vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("softmax requires finite logits"));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Probability floor inside `cross_entropy`; keeps the loss finite when an
/// overfitted model assigns (numerically) zero mass to the true class.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Cross-entropy `-log p[true_class]` with probabilities clamped below at
/// [`PROBABILITY_FLOOR`].
pub fn cross_entropy(probs: &[f64], true_class: usize) -> Result<f64> {
    if true_class >= probs.len() {
        return Err(Error::domain(format!(
            "true_class {true_class} out of range for {} classes",
            probs.len()
        )));
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(0.0..=1.0 + 1e-9).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::domain("probs is not a probability distribution"));
    }
    Ok(-probs[true_class].max(PROBABILITY_FLOOR).ln())
}

/// Signed distance from `x` to the hyperplane `w . x + b = 0`, i.e.
/// `(w . x + b) / ||w||_2`. This is exact for linear models and serves as
/// the ground-truth oracle for black-box distance attacks on them.
pub fn boundary_distance_linear(weights: &[f64], bias: f64, x: &[f64]) -> Result<f64> {
    if weights.len() != x.len() {
        return Err(Error::invalid(format!(
            "weight length {} does not match input length {}",
            weights.len(),
            x.len()
        )));
    }
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::domain("zero weight vector has no boundary"));
    }
    let dot: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum();
    Ok((dot + bias) / norm)
}
