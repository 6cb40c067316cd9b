//! Random-noise scoring: the fraction of noise-perturbed variants the
//! oracle still assigns to the reference label, collected over a grid of
//! probe variances. Members of an overfitted model sit far from the
//! boundary and keep their label under larger probes, so their scores
//! dominate nonmember scores at small variances.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::hsj::ThresholdAttackOutcome;
use super::threshold::{evaluate_records, learn_threshold, partition_finite};
use super::{resolve_reference, AdversaryMode, AttackRecord, OracleSession};
use crate::dataset::{FeatureKind, Sample};
use crate::defense::{perturb, LabelOracle, NoiseSpec};
use crate::error::{Error, Result};

/// Fraction of `k_probe` noise-perturbed variants whose oracle label equals
/// `reference`. The probe noise is the attacker's own randomness.
pub fn score_with_reference(
    session: &mut OracleSession<'_>,
    features: &[f64],
    kind: FeatureKind,
    probe: &NoiseSpec,
    k_probe: usize,
    reference: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if k_probe == 0 {
        return Err(Error::invalid("k_probe must be >= 1"));
    }
    let mut agree = 0usize;
    for _ in 0..k_probe {
        let variant = perturb(features, kind, probe, rng)?;
        if session.query(&variant)? == reference {
            agree += 1;
        }
    }
    Ok(agree as f64 / k_probe as f64)
}

/// Gaussian-probe score for a single sample at probe variance
/// `sigma2_probe`. Continuous features only; the Bernoulli analog for
/// discrete features is [`score_bernoulli`].
pub fn score_g(
    oracle: &dyn LabelOracle,
    sample: &Sample,
    kind: FeatureKind,
    sigma2_probe: f64,
    k_probe: usize,
    mode: AdversaryMode,
    attack_seed: u64,
) -> Result<f64> {
    let mut session = OracleSession::new(oracle, attack_seed, sample.id);
    let mut rng = session.attacker_rng();
    let reference = resolve_reference(&mut session, sample, mode)?;
    score_with_reference(
        &mut session,
        &sample.features,
        kind,
        &NoiseSpec::Gaussian {
            sigma2: sigma2_probe,
        },
        k_probe,
        reference,
        &mut rng,
    )
}

/// Bernoulli-flip probe score for discrete features.
pub fn score_bernoulli(
    oracle: &dyn LabelOracle,
    sample: &Sample,
    kind: FeatureKind,
    p_probe: f64,
    k_probe: usize,
    mode: AdversaryMode,
    attack_seed: u64,
) -> Result<f64> {
    let mut session = OracleSession::new(oracle, attack_seed, sample.id);
    let mut rng = session.attacker_rng();
    let reference = resolve_reference(&mut session, sample, mode)?;
    score_with_reference(
        &mut session,
        &sample.features,
        kind,
        &NoiseSpec::BernoulliFlip { p: p_probe },
        k_probe,
        reference,
        &mut rng,
    )
}

/// Default probe grid: 10 logarithmically spaced variances from 1e-4
/// to 0.5.
pub fn default_probe_grid() -> Vec<f64> {
    let (lo, hi) = (1e-4f64.ln(), 0.5f64.ln());
    (0..10)
        .map(|i| (lo + (hi - lo) * i as f64 / 9.0).exp())
        .collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("probe grid is empty"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("probe grid must be ascending"));
    }
    if grid.iter().any(|&s| s < 0.0) {
        return Err(Error::invalid("probe variances must be >= 0"));
    }
    Ok(())
}

/// Scores over an ascending grid of probe variances; the per-sample vector
/// exported for external visualization.
pub fn score_vector(
    oracle: &dyn LabelOracle,
    sample: &Sample,
    kind: FeatureKind,
    probe_grid: &[f64],
    k_probe: usize,
    mode: AdversaryMode,
    attack_seed: u64,
) -> Result<Vec<f64>> {
    check_grid(probe_grid)?;
    let mut session = OracleSession::new(oracle, attack_seed, sample.id);
    let mut rng = session.attacker_rng();
    let reference = resolve_reference(&mut session, sample, mode)?;
    probe_grid
        .iter()
        .map(|&sigma2| {
            score_with_reference(
                &mut session,
                &sample.features,
                kind,
                &NoiseSpec::Gaussian { sigma2 },
                k_probe,
                reference,
                &mut rng,
            )
        })
        .collect()
}

/// The random-noise distance attack: walk the probe grid upward and record
/// the smallest probe magnitude `sigma'` (the standard deviation,
/// `sqrt(sigma2)`) at which fewer than half of the perturbed variants keep
/// the reference label. Samples whose score never drops below one half
/// get the `INFINITY` sentinel (deep members; counted as members at
/// verdict time, excluded from threshold fitting).
///
/// Samples run in parallel; each uses its own `(attack_seed, id)` streams,
/// so results match a serial run.
pub fn random_noise_attack(
    oracle: &dyn LabelOracle,
    samples: &[Sample],
    kind: FeatureKind,
    probe_grid: &[f64],
    k_probe: usize,
    mode: AdversaryMode,
    attack_seed: u64,
) -> Result<Vec<AttackRecord>> {
    check_grid(probe_grid)?;
    if k_probe == 0 {
        return Err(Error::invalid("k_probe must be >= 1"));
    }
    samples
        .par_iter()
        .map(|sample| {
            let mut session = OracleSession::new(oracle, attack_seed, sample.id);
            let mut rng = session.attacker_rng();
            let reference = resolve_reference(&mut session, sample, mode)?;
            let mut scores = Vec::with_capacity(probe_grid.len());
            let mut magnitude = f64::INFINITY;
            for &sigma2 in probe_grid {
                let score = score_with_reference(
                    &mut session,
                    &sample.features,
                    kind,
                    &NoiseSpec::Gaussian { sigma2 },
                    k_probe,
                    reference,
                    &mut rng,
                )?;
                scores.push(score);
                if score < 0.5 {
                    magnitude = sigma2.sqrt();
                    break;
                }
            }
            let mut record = AttackRecord::new(sample.id, reference);
            record.perturbation_magnitude = Some(magnitude);
            record.score_vector = Some(scores);
            Ok(record)
        })
        .collect()
}

/// End-to-end random-noise attack: measure noise tolerances for both
/// pools, learn the optimal threshold on the finite ones, and assign
/// verdicts (infinite sentinels count as members).
pub fn random_noise_threshold_attack(
    oracle: &dyn LabelOracle,
    members: &[Sample],
    nonmembers: &[Sample],
    kind: FeatureKind,
    probe_grid: &[f64],
    k_probe: usize,
    mode: AdversaryMode,
    attack_seed: u64,
) -> Result<ThresholdAttackOutcome> {
    let mut member_records =
        random_noise_attack(oracle, members, kind, probe_grid, k_probe, mode, attack_seed)?;
    let mut nonmember_records = random_noise_attack(
        oracle,
        nonmembers,
        kind,
        probe_grid,
        k_probe,
        mode,
        attack_seed,
    )?;
    let (finite_members, excluded_members) = partition_finite(&member_records);
    let (finite_nonmembers, excluded_nonmembers) = partition_finite(&nonmember_records);
    let rule = learn_threshold(&finite_members, &finite_nonmembers)?;
    let stats = evaluate_records(&mut member_records, &mut nonmember_records, &rule)?;
    Ok(ThresholdAttackOutcome {
        rule,
        members: member_records,
        nonmembers: nonmember_records,
        stats,
        excluded_members,
        excluded_nonmembers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Membership;
    use std::sync::atomic::{AtomicU64, Ordering};

    /// Deterministic oracle: label 1 inside a centered interval, else 0.
    struct BandOracle {
        half_width: f64,
        queries: AtomicU64,
    }

    impl BandOracle {
        fn new(half_width: f64) -> Self {
            BandOracle {
                half_width,
                queries: AtomicU64::new(0),
            }
        }
    }

    impl LabelOracle for BandOracle {
        fn label(&self, features: &[f64], _query_index: u64) -> Result<usize> {
            self.queries.fetch_add(1, Ordering::Relaxed);
            Ok(usize::from(features[0].abs() <= self.half_width))
        }

        fn queries_used(&self) -> u64 {
            self.queries.load(Ordering::Relaxed)
        }
    }

    fn sample(id: usize, x: f64, label: usize) -> Sample {
        Sample {
            id,
            features: vec![x],
            label,
            membership: Membership::Member,
        }
    }

    #[test]
    fn zero_probe_strong_mode_is_the_correctness_indicator() {
        let oracle = BandOracle::new(1.0);
        let correct = sample(0, 0.0, 1);
        let wrong = sample(1, 0.0, 0);
        let s1 = score_g(
            &oracle,
            &correct,
            FeatureKind::Continuous,
            0.0,
            50,
            AdversaryMode::Strong,
            7,
        )
        .unwrap();
        let s0 = score_g(
            &oracle,
            &wrong,
            FeatureKind::Continuous,
            0.0,
            50,
            AdversaryMode::Strong,
            7,
        )
        .unwrap();
        assert_eq!(s1, 1.0);
        assert_eq!(s0, 0.0);
    }

    #[test]
    fn zero_probe_weak_mode_scores_one() {
        // The weak reference is the oracle's own clean label, so a
        // deterministic oracle always agrees with itself.
        let oracle = BandOracle::new(1.0);
        for label in [0usize, 1] {
            let s = score_g(
                &oracle,
                &sample(3, 0.4, label),
                FeatureKind::Continuous,
                0.0,
                25,
                AdversaryMode::Weak,
                7,
            )
            .unwrap();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn fraction_counts_matching_variants() {
        // Point at the band edge: roughly half the Gaussian probes leave
        // the band. Mostly we check the score is a fraction in (0,1).
        let oracle = BandOracle::new(0.5);
        let s = score_g(
            &oracle,
            &sample(0, 0.5, 1),
            FeatureKind::Continuous,
            0.01,
            1000,
            AdversaryMode::Strong,
            11,
        )
        .unwrap();
        assert!(s > 0.3 && s < 0.7, "score {s}");
    }

    #[test]
    fn score_is_deterministic_per_seed() {
        let oracle = BandOracle::new(0.5);
        let s = sample(5, 0.45, 1);
        let a = score_g(&oracle, &s, FeatureKind::Continuous, 0.02, 100, AdversaryMode::Strong, 3)
            .unwrap();
        let b = score_g(&oracle, &s, FeatureKind::Continuous, 0.02, 100, AdversaryMode::Strong, 3)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn discrete_features_reject_gaussian_probe() {
        let oracle = BandOracle::new(0.5);
        let s = sample(0, 1.0, 1);
        assert!(score_g(
            &oracle,
            &s,
            FeatureKind::Discrete,
            0.01,
            10,
            AdversaryMode::Strong,
            3
        )
        .is_err());
        // Bernoulli probe on discrete features is the supported path.
        assert!(score_bernoulli(
            &oracle,
            &s,
            FeatureKind::Discrete,
            0.1,
            10,
            AdversaryMode::Strong,
            3
        )
        .is_ok());
    }

    #[test]
    fn vector_on_zero_grid_is_all_ones_for_correct_sample() {
        let oracle = BandOracle::new(1.0);
        let v = score_vector(
            &oracle,
            &sample(0, 0.0, 1),
            FeatureKind::Continuous,
            &[0.0, 0.0, 0.0],
            20,
            AdversaryMode::Strong,
            5,
        )
        .unwrap();
        assert_eq!(v, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn vector_entries_stay_in_unit_interval() {
        let oracle = BandOracle::new(0.3);
        let v = score_vector(
            &oracle,
            &sample(0, 0.25, 1),
            FeatureKind::Continuous,
            &default_probe_grid(),
            50,
            AdversaryMode::Strong,
            5,
        )
        .unwrap();
        assert_eq!(v.len(), 10);
        assert!(v.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn non_ascending_grid_is_rejected() {
        let oracle = BandOracle::new(0.3);
        let err = score_vector(
            &oracle,
            &sample(0, 0.25, 1),
            FeatureKind::Continuous,
            &[0.2, 0.1],
            10,
            AdversaryMode::Strong,
            5,
        );
        assert!(err.is_err());
    }

    #[test]
    fn default_grid_shape() {
        let grid = default_probe_grid();
        assert_eq!(grid.len(), 10);
        assert!((grid[0] - 1e-4).abs() < 1e-12);
        assert!((grid[9] - 0.5).abs() < 1e-12);
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn noise_attack_orders_points_by_margin() {
        // Inner point tolerates more noise than the edge point; the point
        // outside the band is misclassified outright (magnitude 0).
        let oracle = BandOracle::new(0.5);
        let samples = vec![sample(0, 0.0, 1), sample(1, 0.45, 1), sample(2, 0.9, 1)];
        let grid = default_probe_grid();
        let records = random_noise_attack(
            &oracle,
            &samples,
            FeatureKind::Continuous,
            &grid,
            200,
            AdversaryMode::Strong,
            13,
        )
        .unwrap();
        let mag = |i: usize| records[i].perturbation_magnitude.unwrap();
        assert_eq!(mag(2), grid[0].sqrt());
        assert!(mag(0) > mag(1), "inner {} vs edge {}", mag(0), mag(1));
    }

    #[test]
    fn noise_attack_matches_serial_composition() {
        // The parallel attack must reproduce the per-sample primitives.
        let oracle = BandOracle::new(0.5);
        let samples = vec![sample(0, 0.1, 1), sample(1, 0.48, 1)];
        let grid = vec![0.001, 0.01, 0.1];
        let records = random_noise_attack(
            &oracle,
            &samples,
            FeatureKind::Continuous,
            &grid,
            64,
            AdversaryMode::Strong,
            23,
        )
        .unwrap();
        for (sample, record) in samples.iter().zip(&records) {
            let full = score_vector(
                &oracle,
                sample,
                FeatureKind::Continuous,
                &grid,
                64,
                AdversaryMode::Strong,
                23,
            )
            .unwrap();
            let partial = record.score_vector.as_ref().unwrap();
            assert_eq!(&full[..partial.len()], &partial[..]);
        }
    }
}
