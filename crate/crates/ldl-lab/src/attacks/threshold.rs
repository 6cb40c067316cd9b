//! Optimal threshold selection on perturbation magnitudes.
//!
//! The verdict direction is fixed: member iff magnitude > tau, since
//! members of an overfitted model need a larger perturbation before they
//! are misclassified.

use serde::{Deserialize, Serialize};

use super::AttackRecord;
use crate::dataset::Membership;
use crate::error::{Error, Result};
use crate::metrics::ConfusionStats;

/// A learned decision rule: member iff magnitude > `tau`. The extremes
/// `-inf` (everything member) and `+inf` (nothing member) are legal
/// degenerate rules; infinite-sentinel magnitudes count as members under
/// any rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub tau: f64,
}

impl ThresholdRule {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_nan() {
            return Err(Error::invalid("threshold must not be NaN"));
        }
        Ok(ThresholdRule { tau })
    }

    /// Apply the rule. A `+inf` magnitude (attack never found any
    /// misclassified point) is the strongest member signal and is member
    /// under every rule.
    pub fn is_member(&self, magnitude: f64) -> bool {
        magnitude == f64::INFINITY || magnitude > self.tau
    }
}

/// Exhaustive threshold search over candidate cut points: the midpoints
/// between consecutive distinct sorted magnitudes plus the two infinite
/// extremes. Returns the tau maximizing `(TPR + TNR) / 2`; ties go to the
/// smallest tau. All magnitudes must be finite (exclude sentinel records
/// upstream).
pub fn learn_threshold_values(members: &[f64], nonmembers: &[f64]) -> Result<ThresholdRule> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::invalid(
            "threshold learning needs nonempty member and nonmember magnitudes",
        ));
    }
    if members
        .iter()
        .chain(nonmembers)
        .any(|m| !m.is_finite() || *m < 0.0)
    {
        return Err(Error::invalid(
            "magnitudes must be finite and nonnegative",
        ));
    }

    let mut sorted_members = members.to_vec();
    sorted_members.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sorted_nonmembers = nonmembers.to_vec();
    sorted_nonmembers.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut pooled: Vec<f64> = members.iter().chain(nonmembers).cloned().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pooled.dedup();

    let mut candidates = vec![f64::NEG_INFINITY];
    candidates.extend(pooled.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    candidates.push(f64::INFINITY);

    let balanced_accuracy = |tau: f64| {
        // member iff magnitude > tau
        let tp = sorted_members.len() - sorted_members.partition_point(|&m| m <= tau);
        let tn = sorted_nonmembers.partition_point(|&m| m <= tau);
        (tp as f64 / sorted_members.len() as f64 + tn as f64 / sorted_nonmembers.len() as f64)
            / 2.0
    };

    let mut best_tau = candidates[0];
    let mut best_score = balanced_accuracy(best_tau);
    for &tau in &candidates[1..] {
        let score = balanced_accuracy(tau);
        if score > best_score {
            best_score = score;
            best_tau = tau;
        }
    }
    ThresholdRule::new(best_tau)
}

/// [`learn_threshold_values`] over attack records. Records without a finite
/// magnitude are not accepted here; exclude infinite sentinels first.
pub fn learn_threshold(
    records_members: &[AttackRecord],
    records_nonmembers: &[AttackRecord],
) -> Result<ThresholdRule> {
    let extract = |records: &[AttackRecord]| -> Result<Vec<f64>> {
        records
            .iter()
            .map(|r| {
                r.perturbation_magnitude.ok_or_else(|| {
                    Error::invalid(format!("record {} has no magnitude", r.sample_id))
                })
            })
            .collect()
    };
    learn_threshold_values(&extract(records_members)?, &extract(records_nonmembers)?)
}

/// Split records into those with finite magnitudes and the count of
/// infinite sentinels (excluded from threshold fitting, warned about by
/// callers, and counted as members at verdict time).
pub fn partition_finite(records: &[AttackRecord]) -> (Vec<AttackRecord>, usize) {
    let mut finite = Vec::with_capacity(records.len());
    let mut infinite = 0usize;
    for r in records {
        match r.perturbation_magnitude {
            Some(m) if m.is_finite() => finite.push(r.clone()),
            _ => infinite += 1,
        }
    }
    (finite, infinite)
}

/// Assign verdicts to measured records under a rule and tally the
/// confusion table. `members` are records measured on true members,
/// `nonmembers` on true nonmembers.
pub fn evaluate_records(
    members: &mut [AttackRecord],
    nonmembers: &mut [AttackRecord],
    rule: &ThresholdRule,
) -> Result<ConfusionStats> {
    let mut stats = ConfusionStats {
        true_positives: 0,
        false_negatives: 0,
        true_negatives: 0,
        false_positives: 0,
    };
    for r in members.iter_mut() {
        let magnitude = r
            .perturbation_magnitude
            .ok_or_else(|| Error::invalid(format!("record {} has no magnitude", r.sample_id)))?;
        if rule.is_member(magnitude) {
            r.assign_verdict(Membership::Member)?;
            stats.true_positives += 1;
        } else {
            r.assign_verdict(Membership::Nonmember)?;
            stats.false_negatives += 1;
        }
    }
    for r in nonmembers.iter_mut() {
        let magnitude = r
            .perturbation_magnitude
            .ok_or_else(|| Error::invalid(format!("record {} has no magnitude", r.sample_id)))?;
        if rule.is_member(magnitude) {
            r.assign_verdict(Membership::Member)?;
            stats.false_positives += 1;
        } else {
            r.assign_verdict(Membership::Nonmember)?;
            stats.true_negatives += 1;
        }
    }
    Ok(stats)
}
