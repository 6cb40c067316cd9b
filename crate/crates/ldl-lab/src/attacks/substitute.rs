//! Substitute-model threshold transfer.
//!
//! An adversary without member/nonmember examples of the target trains a
//! local stand-in with the same architecture on its own data, learns a
//! membership threshold against the stand-in, and applies that threshold to
//! boundary distances measured against the real target.

use serde::{Deserialize, Serialize};

use super::hsj::{threshold_attack, HsjConfig};
use super::threshold::{evaluate_records, ThresholdRule};
use super::{AdversaryMode, AttackRecord};
use crate::dataset::{split, Dataset, FeatureKind, Sample, SplitSpec};
use crate::defense::{LabelOracle, SmoothedClassifier};
use crate::error::{Error, Result};
use crate::metrics::ConfusionStats;

/// How the adversary builds its local substitute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstituteConfig {
    /// Member/nonmember split of the adversary's own dataset.
    pub split: SplitSpec,
    /// Architecture, assumed known to the adversary (same as the target).
    pub model_spec: crate::model::ModelSpec,
    pub train_config: crate::model::TrainConfig,
}

/// Result of the substitute attack.
#[derive(Debug, Clone)]
pub struct SubstituteOutcome {
    /// Threshold learned against the local substitute.
    pub rule: ThresholdRule,
    /// Success rate of the attack against the substitute itself.
    pub local_stats: ConfusionStats,
    /// Records measured against the target, verdicts assigned with the
    /// locally learned rule.
    pub members: Vec<AttackRecord>,
    pub nonmembers: Vec<AttackRecord>,
    pub stats: ConfusionStats,
}

/// Run the substitute attack.
///
/// `adversary_data` must be disjoint (by sample identity) from the target's
/// member set; that is the caller's responsibility since a black-box
/// attacker cannot check it. Strong mode only: the substitute adversary
/// needs labels to train and calibrate.
pub fn substitute_attack(
    target: &dyn LabelOracle,
    adversary_data: &Dataset,
    config: &SubstituteConfig,
    eval_members: &[Sample],
    eval_nonmembers: &[Sample],
    mode: AdversaryMode,
    hsj: &HsjConfig,
    attack_seed: u64,
) -> Result<SubstituteOutcome> {
    if mode != AdversaryMode::Strong {
        return Err(Error::invalid(
            "substitute attack needs labeled local data; weak mode is not defined",
        ));
    }
    if adversary_data.feature_kind != FeatureKind::Continuous {
        return Err(Error::domain(
            "substitute attack measures L2 boundary distances; continuous features only",
        ));
    }

    // Local phase: train the stand-in on the adversary's own member split
    // and learn the separating threshold against it.
    let (sub_members, sub_nonmembers) = split(adversary_data, &config.split)?;
    let outcome = crate::model::train(&sub_members, &config.model_spec, &config.train_config)?;
    let substitute =
        SmoothedClassifier::defense_free(outcome.model, adversary_data.feature_kind);
    let local = threshold_attack(
        &substitute,
        &sub_members.samples,
        &sub_nonmembers.samples,
        adversary_data.feature_kind,
        AdversaryMode::Strong,
        hsj,
        attack_seed,
    )?;

    // Transfer phase: measure the evaluation pools against the real target
    // and apply the local threshold unchanged.
    let measured = threshold_attack(
        target,
        eval_members,
        eval_nonmembers,
        adversary_data.feature_kind,
        AdversaryMode::Strong,
        hsj,
        attack_seed,
    )?;
    let mut members = measured.members;
    let mut nonmembers = measured.nonmembers;
    for r in members.iter_mut().chain(nonmembers.iter_mut()) {
        r.verdict = None;
    }
    let stats = evaluate_records(&mut members, &mut nonmembers, &local.rule)?;

    Ok(SubstituteOutcome {
        rule: local.rule,
        local_stats: local.stats,
        members,
        nonmembers,
        stats,
    })
}
