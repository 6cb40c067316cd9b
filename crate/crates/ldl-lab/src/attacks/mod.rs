//! Label-only membership inference attacks.
//!
//! Every attack here consumes nothing but [`LabelOracle`] outputs (plus true
//! labels when the adversary is strong, and white-box gradients for the FGS
//! robustness probe, which is a diagnostic rather than a label-only attack).
//! Per-sample query streams derive from `(attack seed, sample id)`, so
//! samples can be attacked in parallel and in any order with identical
//! results.

mod fgs;
mod gap;
mod hsj;
mod scores;
mod substitute;
mod threshold;

pub use fgs::{fgs_misclassification_rate, fgs_perturb};
pub use gap::gap_attack;
pub use hsj::{hsj_distance, min_perturbation_hsj, threshold_attack, HsjConfig, ThresholdAttackOutcome};
pub use scores::{
    default_probe_grid, random_noise_attack, random_noise_threshold_attack, score_bernoulli,
    score_g, score_vector, score_with_reference,
};
pub use substitute::{substitute_attack, SubstituteConfig, SubstituteOutcome};
pub use threshold::{evaluate_records, learn_threshold, learn_threshold_values, ThresholdRule};

use serde::{Deserialize, Serialize};

use crate::dataset::{Membership, Sample};
use crate::defense::LabelOracle;
use crate::error::{Error, Result};
use crate::seeds;

/// What the adversary knows about a sample it holds.
///
/// A strong adversary knows the true label and uses it as the reference; a
/// weak adversary only has the features and substitutes the oracle's label
/// on the clean input, queried once and cached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryMode {
    Strong,
    Weak,
}

/// Per-sample attack measurement plus (eventually) a membership verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRecord {
    pub sample_id: usize,
    pub reference_label: usize,
    /// Estimated minimal perturbation magnitude; `f64::INFINITY` marks an
    /// attack that found no misclassified point at all.
    pub perturbation_magnitude: Option<f64>,
    pub score_vector: Option<Vec<f64>>,
    pub verdict: Option<Membership>,
}

impl AttackRecord {
    pub fn new(sample_id: usize, reference_label: usize) -> Self {
        AttackRecord {
            sample_id,
            reference_label,
            perturbation_magnitude: None,
            score_vector: None,
            verdict: None,
        }
    }

    /// Assign a verdict; requires a magnitude or score vector to already be
    /// present, so verdicts can never precede evidence.
    pub fn assign_verdict(&mut self, verdict: Membership) -> Result<()> {
        if self.perturbation_magnitude.is_none() && self.score_vector.is_none() {
            return Err(Error::invalid(
                "verdict requires a perturbation magnitude or score vector",
            ));
        }
        self.verdict = Some(verdict);
        Ok(())
    }
}

/// Serialize records to CSV: `sample_id, reference_label, magnitude,
/// verdict, score_0..score_n`. Missing cells stay empty; infinite
/// magnitudes print as `inf`.
pub fn records_to_csv(records: &[AttackRecord]) -> String {
    let width = records
        .iter()
        .filter_map(|r| r.score_vector.as_ref().map(Vec::len))
        .max()
        .unwrap_or(0);
    let mut out = String::from("sample_id,reference_label,magnitude,verdict");
    for i in 0..width {
        out.push_str(&format!(",score_{i}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&format!("{},{}", r.sample_id, r.reference_label));
        match r.perturbation_magnitude {
            Some(m) if m.is_infinite() => out.push_str(",inf"),
            Some(m) => out.push_str(&format!(",{m}")),
            None => out.push(','),
        }
        match r.verdict {
            Some(Membership::Member) => out.push_str(",member"),
            Some(Membership::Nonmember) => out.push_str(",nonmember"),
            None => out.push(','),
        }
        for i in 0..width {
            match r.score_vector.as_ref().and_then(|v| v.get(i)) {
                Some(s) => out.push_str(&format!(",{s}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// A per-sample view of the oracle: derives this sample's query-index
/// stream, counts local queries, and enforces the per-sample budget.
pub struct OracleSession<'a> {
    oracle: &'a dyn LabelOracle,
    stream_base: u64,
    used: u64,
    budget: u64,
}

impl<'a> OracleSession<'a> {
    /// Unbounded session for attacks whose query count is structurally
    /// bounded by their parameters.
    pub fn new(oracle: &'a dyn LabelOracle, attack_seed: u64, sample_id: usize) -> Self {
        Self::with_budget(oracle, attack_seed, sample_id, u64::MAX)
    }

    pub fn with_budget(
        oracle: &'a dyn LabelOracle,
        attack_seed: u64,
        sample_id: usize,
        budget: u64,
    ) -> Self {
        OracleSession {
            oracle,
            stream_base: seeds::mix(attack_seed, sample_id as u64),
            used: 0,
            budget,
        }
    }

    pub fn query(&mut self, features: &[f64]) -> Result<usize> {
        if self.used >= self.budget {
            return Err(Error::BudgetExhausted { used: self.used });
        }
        let index = seeds::mix(self.stream_base, self.used);
        self.used += 1;
        self.oracle.label(features, index)
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.used
    }

    /// The attacker-side randomness stream for this sample.
    pub fn attacker_rng(&self) -> rand_chacha::ChaCha8Rng {
        seeds::rng_for(self.stream_base, u64::MAX)
    }
}

/// Resolve the reference label for a sample under the given adversary mode.
/// Weak mode costs one oracle query.
pub fn resolve_reference(
    session: &mut OracleSession<'_>,
    sample: &Sample,
    mode: AdversaryMode,
) -> Result<usize> {
    match mode {
        AdversaryMode::Strong => Ok(sample.label),
        AdversaryMode::Weak => session.query(&sample.features),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_requires_evidence() {
        let mut r = AttackRecord::new(0, 1);
        assert!(r.assign_verdict(Membership::Member).is_err());
        r.perturbation_magnitude = Some(0.4);
        assert!(r.assign_verdict(Membership::Member).is_ok());
        assert_eq!(r.verdict, Some(Membership::Member));
    }

    #[test]
    fn csv_layout() {
        let mut a = AttackRecord::new(3, 1);
        a.perturbation_magnitude = Some(0.25);
        a.assign_verdict(Membership::Member).unwrap();
        let mut b = AttackRecord::new(4, 0);
        b.score_vector = Some(vec![1.0, 0.5]);
        b.perturbation_magnitude = Some(f64::INFINITY);
        b.assign_verdict(Membership::Nonmember).unwrap();
        let csv = records_to_csv(&[a, b]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "sample_id,reference_label,magnitude,verdict,score_0,score_1");
        assert_eq!(lines[1], "3,1,0.25,member,,");
        assert_eq!(lines[2], "4,0,inf,nonmember,1,0.5");
    }
}
