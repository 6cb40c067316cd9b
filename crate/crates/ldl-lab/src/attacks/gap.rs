//! The gap attack: declare member exactly when the oracle classifies the
//! sample correctly.

use super::{AdversaryMode, AttackRecord, OracleSession};
use crate::dataset::{Membership, Sample};
use crate::defense::LabelOracle;
use crate::error::{Error, Result};

/// Run the gap attack over `samples`. One oracle query per sample; the
/// verdict is member iff the oracle's label equals the true label. The
/// recorded score vector holds the single zero-noise agreement indicator.
///
/// Requires a strong adversary: a weak adversary's reference is the
/// oracle's own output, which would degenerate every verdict to member, so
/// weak mode is rejected instead of silently returned.
pub fn gap_attack(
    oracle: &dyn LabelOracle,
    samples: &[Sample],
    mode: AdversaryMode,
    attack_seed: u64,
) -> Result<Vec<AttackRecord>> {
    if mode != AdversaryMode::Strong {
        return Err(Error::invalid(
            "gap attack needs true labels; weak mode degenerates to all-member",
        ));
    }
    samples
        .iter()
        .map(|sample| {
            let mut session = OracleSession::new(oracle, attack_seed, sample.id);
            let predicted = session.query(&sample.features)?;
            let correct = predicted == sample.label;
            let mut record = AttackRecord::new(sample.id, sample.label);
            record.score_vector = Some(vec![if correct { 1.0 } else { 0.0 }]);
            record.assign_verdict(if correct {
                Membership::Member
            } else {
                Membership::Nonmember
            })?;
            Ok(record)
        })
        .collect()
}
