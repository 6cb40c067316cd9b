//! Fast-gradient-sign robustness probe.
//!
//! Unlike the label-only attacks, this is a white-box diagnostic: it reads
//! input gradients off the base model to build `x + eps * sign(grad)` and
//! measures how misclassification rates grow with `eps` for members versus
//! nonmembers, with or without smoothing in front of the model.

use super::{AdversaryMode, OracleSession};
use crate::dataset::Sample;
use crate::defense::LabelOracle;
use crate::error::{Error, Result};
use crate::model::{argmax, input_gradient, TrainedModel};

/// Perturb one sample by `eps` along the sign of the loss gradient at the
/// reference label (`sign(0) = 0`). Strong mode differentiates at the true
/// label; weak mode at the model's own prediction.
pub fn fgs_perturb(
    model: &TrainedModel,
    sample: &Sample,
    epsilon: f64,
    mode: AdversaryMode,
) -> Result<Vec<f64>> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    let reference = match mode {
        AdversaryMode::Strong => sample.label,
        AdversaryMode::Weak => argmax(&model.forward_logits(&sample.features)?),
    };
    let grad = input_gradient(model, &sample.features, reference)?;
    Ok(sample
        .features
        .iter()
        .zip(&grad)
        .map(|(&x, &g)| x + epsilon * sign(g))
        .collect())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fraction of samples whose FGS-perturbed variant the oracle labels away
/// from the reference. Gradients come from the white-box `model`; the
/// verdict comes from `oracle`, which may wrap the same model in smoothing.
pub fn fgs_misclassification_rate(
    model: &TrainedModel,
    oracle: &dyn LabelOracle,
    samples: &[Sample],
    epsilon: f64,
    mode: AdversaryMode,
    attack_seed: u64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("misclassification rate over no samples"));
    }
    let mut missed = 0usize;
    for sample in samples {
        let adv = fgs_perturb(model, sample, epsilon, mode)?;
        let reference = match mode {
            AdversaryMode::Strong => sample.label,
            AdversaryMode::Weak => argmax(&model.forward_logits(&sample.features)?),
        };
        let mut session = OracleSession::new(oracle, attack_seed, sample.id);
        if session.query(&adv)? != reference {
            missed += 1;
        }
    }
    Ok(missed as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_blobs, Membership};
    use crate::defense::SmoothedClassifier;
    use crate::model::{train, Activation, ModelSpec, TrainConfig};

    fn trained() -> (TrainedModel, crate::dataset::Dataset) {
        let data = generate_blobs(2, 2, 80, 0.08, 0.0, 12).unwrap();
        let spec = ModelSpec::new(vec![2, 12, 2], vec![Activation::Relu], 3).unwrap();
        let cfg = TrainConfig {
            epochs: 40,
            ..TrainConfig::default()
        };
        (train(&data, &spec, &cfg).unwrap().model, data)
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let (model, data) = trained();
        let s = &data.samples[0];
        let adv = fgs_perturb(&model, s, 0.0, AdversaryMode::Strong).unwrap();
        assert_eq!(adv, s.features);
    }

    #[test]
    fn signs_scale_coordinates_by_epsilon() {
        let (model, data) = trained();
        let s = &data.samples[3];
        let adv = fgs_perturb(&model, s, 0.1, AdversaryMode::Strong).unwrap();
        for (a, x) in adv.iter().zip(&s.features) {
            let d = a - x;
            assert!(
                d.abs() < 1e-12 || (d.abs() - 0.1).abs() < 1e-12,
                "step {d} is neither 0 nor +/-0.1"
            );
        }
    }

    #[test]
    fn negative_epsilon_is_rejected() {
        let (model, data) = trained();
        assert!(fgs_perturb(&model, &data.samples[0], -0.1, AdversaryMode::Strong).is_err());
    }

    #[test]
    fn misclassification_rate_nondecreasing_in_epsilon() {
        let (model, data) = trained();
        let oracle = SmoothedClassifier::defense_free(model.clone(), data.feature_kind);
        let samples: Vec<Sample> = data.samples.iter().take(40).cloned().collect();
        let mut prev = -1.0;
        for eps in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let rate = fgs_misclassification_rate(
                &model,
                &oracle,
                &samples,
                eps,
                AdversaryMode::Strong,
                3,
            )
            .unwrap();
            assert!(
                rate >= prev - 1e-12,
                "rate {rate} at eps {eps} dropped below {prev}"
            );
            prev = rate;
        }
    }

    #[test]
    fn weak_mode_references_model_prediction() {
        let (model, _) = trained();
        // A sample the model misclassifies: weak mode measures against the
        // model's own (wrong) label, so at eps 0 it is never "missed".
        let sample = Sample {
            id: 0,
            features: vec![0.5, 0.5],
            label: 0,
            membership: Membership::Nonmember,
        };
        let oracle = SmoothedClassifier::defense_free(model.clone(), crate::dataset::FeatureKind::Continuous);
        let rate = fgs_misclassification_rate(
            &model,
            &oracle,
            &[sample],
            0.0,
            AdversaryMode::Weak,
            3,
        )
        .unwrap();
        assert_eq!(rate, 0.0);
    }
}
