//! Exact backpropagation gradients for the dense classifier.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{dataset_matrix, ForwardTrace, TrainedModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Parameter gradients with the same shapes as the model's parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Gradient of the mean cross-entropy over `batch` with respect to every
/// weight and bias.
pub fn gradients(model: &TrainedModel, batch: &Dataset) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient of an empty batch"));
    }
    if batch.dims != model.input_dims() {
        return Err(Error::invalid(format!(
            "batch dims {} do not match model input {}",
            batch.dims,
            model.input_dims()
        )));
    }
    let x = dataset_matrix(batch);
    let labels: Vec<usize> = batch.samples.iter().map(|s| s.label).collect();
    Ok(gradients_on(model, x.view(), &labels).0)
}

/// Backprop over a feature matrix; returns gradients and the mean loss.
/// Rows of `inputs` must match the model input width and `labels` length.
pub(super) fn gradients_on(
    model: &TrainedModel,
    inputs: ArrayView2<'_, f64>,
    labels: &[usize],
) -> (Gradients, f64) {
    let n = inputs.nrows();
    let trace = model.forward_trace(inputs);
    let (mut delta, loss) = output_delta(&trace, labels);
    // Mean over the batch.
    delta /= n as f64;

    let layers = model.weights.len();
    let mut w_grads: Vec<Array2<f64>> = Vec::with_capacity(layers);
    let mut b_grads: Vec<Array1<f64>> = Vec::with_capacity(layers);
    for l in (0..layers).rev() {
        let upstream = if l == 0 {
            inputs.to_owned()
        } else {
            trace.post[l - 1].clone()
        };
        w_grads.push(delta.t().dot(&upstream));
        b_grads.push(delta.sum_axis(Axis(0)));
        if l > 0 {
            let mut back = delta.dot(&model.weights[l]);
            let act = model.spec.activations[l - 1];
            back.zip_mut_with(&trace.pre[l - 1], |d, &z| *d *= act.derivative(z));
            delta = back;
        }
    }
    w_grads.reverse();
    b_grads.reverse();
    (
        Gradients {
            weights: w_grads,
            biases: b_grads,
        },
        loss,
    )
}

/// Softmax-cross-entropy output delta `P - Y` per row, plus the mean loss.
fn output_delta(trace: &ForwardTrace, labels: &[usize]) -> (Array2<f64>, f64) {
    let logits = trace.post.last().expect("at least one layer");
    let mut delta = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (j, &e) in exps.iter().enumerate() {
            let p = e / sum;
            delta[[i, j]] = p - if j == labels[i] { 1.0 } else { 0.0 };
        }
        let p_true = (exps[labels[i]] / sum).max(super::PROBABILITY_FLOOR);
        loss -= p_true.ln();
    }
    (delta, loss / labels.len() as f64)
}

/// Gradient of the cross-entropy loss at `reference_label` with respect to
/// the input features. This is what the fast-gradient-sign probe consumes.
pub fn input_gradient(
    model: &TrainedModel,
    features: &[f64],
    reference_label: usize,
) -> Result<Vec<f64>> {
    model.check_input(features)?;
    if reference_label >= model.classes() {
        return Err(Error::invalid(format!(
            "reference label {reference_label} out of range for {} classes",
            model.classes()
        )));
    }
    let x = ArrayView2::from_shape((1, features.len()), features).expect("shape checked");
    let trace = model.forward_trace(x);
    let (mut delta, _) = output_delta(&trace, &[reference_label]);
    for l in (0..model.weights.len()).rev() {
        let back = delta.dot(&model.weights[l]);
        if l > 0 {
            let mut back = back;
            let act = model.spec.activations[l - 1];
            back.zip_mut_with(&trace.pre[l - 1], |d, &z| *d *= act.derivative(z));
            delta = back;
        } else {
            return Ok(back.row(0).to_vec());
        }
    }
    unreachable!("models always have at least one layer")
}

/// Mean cross-entropy of the model over a dataset; the finite-difference
/// oracle in the tests differentiates this.
#[cfg(test)]
pub(super) fn mean_loss(model: &TrainedModel, inputs: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    let logits = model.forward_batch(inputs);
    let mut loss = 0.0;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let p = ((logits[[i, labels[i]]] - max).exp() / sum).max(super::PROBABILITY_FLOOR);
        loss -= p.ln();
    }
    loss / labels.len() as f64
}
