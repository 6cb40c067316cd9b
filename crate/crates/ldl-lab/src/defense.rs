//! The LDL smoothed classifier: an ensemble of noise-perturbed forward
//! passes with logit averaging.
//!
//! Each query draws `k` perturbed variants of the input, runs the base model
//! on all of them, averages the logit vectors, and applies softmax. Gaussian
//! noise serves continuous features; Bernoulli bit-flip noise serves
//! discrete ones. Attacks may only call [`LabelOracle::label`], which hides
//! confidences and counts queries.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureKind;
use crate::error::{Error, Result};
use crate::model::{argmax, softmax, TrainedModel};
use crate::seeds;

/// Randomization applied to inputs: Gaussian with variance `sigma2` for
/// continuous features, or an independent bit flip with probability `p` for
/// discrete ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Gaussian { sigma2: f64 },
    BernoulliFlip { p: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gaussian { sigma2 } => {
                if !(sigma2 >= 0.0) {
                    return Err(Error::invalid(format!("sigma2 must be >= 0, got {sigma2}")));
                }
            }
            NoiseSpec::BernoulliFlip { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::invalid(format!("p must be in [0,1], got {p}")));
                }
            }
        }
        Ok(())
    }

    /// True when the noise never changes the input (`sigma2 = 0` / `p = 0`),
    /// in which case every perturbed variant coincides with the input and
    /// the ensemble average equals a single base forward pass.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, NoiseSpec::Gaussian { sigma2: 0.0 } | NoiseSpec::BernoulliFlip { p: 0.0 })
    }

    fn check_kind(&self, kind: FeatureKind) -> Result<()> {
        match (self, kind) {
            (NoiseSpec::Gaussian { .. }, FeatureKind::Continuous) => Ok(()),
            (NoiseSpec::BernoulliFlip { .. }, FeatureKind::Discrete) => Ok(()),
            _ => Err(Error::domain(format!(
                "noise {self:?} does not match feature kind {kind:?}"
            ))),
        }
    }
}

/// Perturb a feature vector.
///
/// Gaussian noise adds i.i.d. `N(0, sigma2)` per coordinate with no
/// clipping; Bernoulli flip independently replaces each bit `b` with `1-b`
/// with probability `p`. The noise kind must match the feature kind.
pub fn perturb(
    features: &[f64],
    kind: FeatureKind,
    noise: &NoiseSpec,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    noise.validate()?;
    noise.check_kind(kind)?;
    match *noise {
        NoiseSpec::Gaussian { sigma2 } => {
            if sigma2 == 0.0 {
                return Ok(features.to_vec());
            }
            let normal = Normal::new(0.0, sigma2.sqrt()).expect("sigma checked");
            Ok(features.iter().map(|&x| x + normal.sample(rng)).collect())
        }
        NoiseSpec::BernoulliFlip { p } => {
            if features.iter().any(|&b| b != 0.0 && b != 1.0) {
                return Err(Error::domain(
                    "bernoulli_flip requires binary feature values",
                ));
            }
            Ok(features
                .iter()
                .map(|&b| {
                    if rng.random_range(0.0..1.0) < p {
                        1.0 - b
                    } else {
                        b
                    }
                })
                .collect())
        }
    }
}

/// The label-only query interface every attack consumes.
///
/// `query_index` selects the per-query noise stream: results for a given
/// `(oracle seed, query_index)` pair are deterministic and independent of
/// evaluation order, so per-sample attack runs can execute in parallel and
/// still reproduce serial results. Implementations count each call.
pub trait LabelOracle: Sync {
    fn label(&self, features: &[f64], query_index: u64) -> Result<usize>;

    /// Total queries served so far.
    fn queries_used(&self) -> u64;
}

/// A base classifier wrapped in randomized smoothing.
#[derive(Debug)]
pub struct SmoothedClassifier {
    pub base: TrainedModel,
    pub noise: NoiseSpec,
    /// Ensemble size: perturbed variants averaged per query.
    pub k: usize,
    pub seed: u64,
    feature_kind: FeatureKind,
    queries: AtomicU64,
}

impl SmoothedClassifier {
    pub fn new(
        base: TrainedModel,
        noise: NoiseSpec,
        k: usize,
        seed: u64,
        feature_kind: FeatureKind,
    ) -> Result<Self> {
        noise.validate()?;
        if k == 0 {
            return Err(Error::invalid("ensemble size k must be >= 1"));
        }
        if !noise.is_degenerate() {
            noise.check_kind(feature_kind)?;
        }
        Ok(SmoothedClassifier {
            base,
            noise,
            k,
            seed,
            feature_kind,
            queries: AtomicU64::new(0),
        })
    }

    /// An undefended target: zero noise, single-variant ensemble. The
    /// oracle then returns exactly the base model's argmax.
    pub fn defense_free(base: TrainedModel, feature_kind: FeatureKind) -> Self {
        SmoothedClassifier::new(base, NoiseSpec::Gaussian { sigma2: 0.0 }, 1, 0, feature_kind)
            .expect("degenerate noise is always valid")
    }

    /// Smoothed prediction: draw `k` perturbations from the stream
    /// `(seed, query_index)`, average the base model's logits over them,
    /// and softmax. Returns the argmax label (lowest index on ties) and the
    /// averaged-then-softmaxed confidence vector.
    pub fn smooth_predict(&self, features: &[f64], query_index: u64) -> Result<(usize, Vec<f64>)> {
        if features.len() != self.base.input_dims() {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.base.input_dims(),
                features.len()
            )));
        }
        let mean_logits = if self.noise.is_degenerate() {
            // All k variants coincide with the input, so the ensemble
            // average is exactly one forward pass.
            self.base.forward_logits(features)?
        } else {
            let mut rng = seeds::rng_for(self.seed, query_index);
            let mut variants = Array2::zeros((self.k, features.len()));
            for mut row in variants.axis_iter_mut(Axis(0)) {
                let v = perturb(features, self.feature_kind, &self.noise, &mut rng)?;
                row.assign(&ndarray::ArrayView1::from(&v[..]));
            }
            let logits = self.base.forward_batch(variants.view());
            logits.mean_axis(Axis(0)).expect("k >= 1").to_vec()
        };
        let confidences = softmax(&mean_logits)?;
        Ok((argmax(&mean_logits), confidences))
    }
}

impl LabelOracle for SmoothedClassifier {
    /// Thin wrapper over [`SmoothedClassifier::smooth_predict`] discarding
    /// confidences; the only interface attacks may call. Each call
    /// increments the query counter.
    fn label(&self, features: &[f64], query_index: u64) -> Result<usize> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        Ok(self.smooth_predict(features, query_index)?.0)
    }

    fn queries_used(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}
