//! Decision-based minimal-perturbation estimation against a label-only
//! oracle, in the HopSkipJump style: random initialization in the feature
//! box, bisection onto the decision boundary, then iterated Monte-Carlo
//! gradient-direction estimates with a geometric step search and
//! re-projection.
//!
//! The returned magnitude is the L2 distance from the input to the best
//! adversarial point found. Members of an overfitted model need larger
//! magnitudes than nonmembers, which is what the threshold attack exploits.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::threshold::{evaluate_records, learn_threshold, partition_finite, ThresholdRule};
use super::{AdversaryMode, AttackRecord, OracleSession};
use crate::dataset::{FeatureKind, Sample};
use crate::defense::LabelOracle;
use crate::error::{Error, Result};
use crate::metrics::ConfusionStats;

/// Budget and precision knobs for the boundary-distance search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HsjConfig {
    /// Uniform draws in the feature box allowed when hunting for an
    /// initial misclassified point.
    pub init_trials: usize,
    /// Bisection stops once the bracket is shorter than this (in
    /// normalized feature units).
    pub bisection_tol: f64,
    /// Baseline count of decision probes per gradient estimate; step `t`
    /// uses `probes_per_step * sqrt(t)`.
    pub probes_per_step: usize,
    /// Gradient-step iterations after the initial projection.
    pub max_iters: usize,
    /// Hard cap on oracle queries per sample.
    pub query_budget: u64,
}

impl Default for HsjConfig {
    fn default() -> Self {
        HsjConfig {
            init_trials: 200,
            bisection_tol: 1e-3,
            probes_per_step: 100,
            max_iters: 30,
            query_budget: 25_000,
        }
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Bisect along `[origin, adversarial]` until the bracket is shorter than
/// `tol`, returning the adversarial-side endpoint. Stops early (returning
/// the current adversarial point) if the query budget runs dry.
fn bisect_to_boundary(
    session: &mut OracleSession<'_>,
    origin: &[f64],
    adversarial: &[f64],
    reference: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    let mut lo = origin.to_vec();
    let mut hi = adversarial.to_vec();
    // The bracket halves every step; 200 iterations is unreachable in
    // practice and guards against degenerate tolerances.
    for _ in 0..200 {
        if l2(&lo, &hi) <= tol || session.remaining() == 0 {
            break;
        }
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (a + b) / 2.0).collect();
        if session.query(&mid)? != reference {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Estimate the minimal L2 perturbation moving `x` off the `reference`
/// label, querying through `session`. `clean_label`, when known, skips the
/// initial query of `x` itself (the weak adversary already spent it).
///
/// Returns 0 when the clean input is already classified away from the
/// reference, and `f64::INFINITY` when no misclassified initialization is
/// found within the trial allowance.
pub fn hsj_distance(
    session: &mut OracleSession<'_>,
    x: &[f64],
    reference: usize,
    clean_label: Option<usize>,
    cfg: &HsjConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    use rand::Rng;
    let dims = x.len();

    let clean = match clean_label {
        Some(label) => label,
        None => session.query(x)?,
    };
    if clean != reference {
        return Ok(0.0);
    }

    // Initialization: uniform points in the unit feature box.
    let mut adversarial: Option<Vec<f64>> = None;
    for _ in 0..cfg.init_trials {
        if session.remaining() == 0 {
            break;
        }
        let candidate: Vec<f64> = (0..dims).map(|_| rng.random_range(0.0..1.0)).collect();
        if session.query(&candidate)? != reference {
            adversarial = Some(candidate);
            break;
        }
    }
    let Some(first) = adversarial else {
        return Ok(f64::INFINITY);
    };

    let mut boundary = bisect_to_boundary(session, x, &first, reference, cfg.bisection_tol)?;
    let mut best = l2(&boundary, x);

    for t in 1..=cfg.max_iters {
        let probes = ((cfg.probes_per_step as f64) * (t as f64).sqrt()).round() as usize;
        // Leave room for the step search and re-projection.
        if session.remaining() < probes as u64 + 16 {
            break;
        }
        let dist = l2(&boundary, x);
        let delta = (dims as f64).sqrt() * cfg.bisection_tol * dist;

        // Monte-Carlo gradient direction from signed decision probes.
        let mut signs = Vec::with_capacity(probes);
        let mut directions = Vec::with_capacity(probes);
        for _ in 0..probes {
            let mut u: Vec<f64> = (0..dims)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            u.iter_mut().for_each(|v| *v /= norm);
            let probe_point: Vec<f64> = boundary
                .iter()
                .zip(&u)
                .map(|(b, du)| b + delta * du)
                .collect();
            let sign = if session.query(&probe_point)? != reference {
                1.0
            } else {
                -1.0
            };
            signs.push(sign);
            directions.push(u);
        }
        let mean_sign = signs.iter().sum::<f64>() / probes as f64;
        let mut grad = vec![0.0; dims];
        if mean_sign.abs() >= 1.0 {
            // Every probe agreed; fall back to the mean direction, pointed
            // toward the adversarial side.
            for u in &directions {
                for (g, du) in grad.iter_mut().zip(u) {
                    *g += mean_sign * du;
                }
            }
        } else {
            for (sign, u) in signs.iter().zip(&directions) {
                let w = sign - mean_sign;
                for (g, du) in grad.iter_mut().zip(u) {
                    *g += w * du;
                }
            }
        }
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 {
            continue;
        }
        grad.iter_mut().for_each(|v| *v /= norm);

        // Geometric step search along the estimated direction.
        let mut step = dist / (t as f64).sqrt();
        let mut moved: Option<Vec<f64>> = None;
        for _ in 0..12 {
            if session.remaining() == 0 {
                break;
            }
            let candidate: Vec<f64> = boundary
                .iter()
                .zip(&grad)
                .map(|(b, g)| b + step * g)
                .collect();
            if session.query(&candidate)? != reference {
                moved = Some(candidate);
                break;
            }
            step /= 2.0;
        }
        let Some(candidate) = moved else {
            continue;
        };

        boundary = bisect_to_boundary(session, x, &candidate, reference, cfg.bisection_tol)?;
        best = best.min(l2(&boundary, x));
        if session.remaining() == 0 {
            break;
        }
    }

    Ok(best)
}

/// Full per-sample attack under an adversary mode: resolves the reference
/// label (strong: true label; weak: one cached oracle query), then runs
/// [`hsj_distance`] inside the per-sample budget. Continuous features only;
/// discrete feature spaces have no meaningful L2 boundary distance.
pub fn min_perturbation_hsj(
    oracle: &dyn LabelOracle,
    sample: &Sample,
    kind: FeatureKind,
    mode: AdversaryMode,
    cfg: &HsjConfig,
    attack_seed: u64,
) -> Result<f64> {
    if kind == FeatureKind::Discrete {
        return Err(Error::domain(
            "boundary-distance search needs continuous features; use the Bernoulli-probe scores",
        ));
    }
    let mut session = OracleSession::with_budget(oracle, attack_seed, sample.id, cfg.query_budget);
    let mut rng = session.attacker_rng();
    let (reference, clean) = match mode {
        AdversaryMode::Strong => (sample.label, None),
        AdversaryMode::Weak => {
            let label = session.query(&sample.features)?;
            (label, Some(label))
        }
    };
    hsj_distance(&mut session, &sample.features, reference, clean, cfg, &mut rng)
}

/// Outcome of the end-to-end threshold attack.
#[derive(Debug, Clone)]
pub struct ThresholdAttackOutcome {
    pub rule: ThresholdRule,
    pub members: Vec<AttackRecord>,
    pub nonmembers: Vec<AttackRecord>,
    pub stats: ConfusionStats,
    /// Infinite-sentinel records excluded from threshold fitting.
    pub excluded_members: usize,
    pub excluded_nonmembers: usize,
}

/// The boundary-distance threshold attack: measure magnitudes for both
/// pools, learn the optimal threshold on the finite ones, and assign
/// verdicts (infinite sentinels count as members). Per-sample runs execute
/// in parallel.
pub fn threshold_attack(
    oracle: &dyn LabelOracle,
    members: &[Sample],
    nonmembers: &[Sample],
    kind: FeatureKind,
    mode: AdversaryMode,
    cfg: &HsjConfig,
    attack_seed: u64,
) -> Result<ThresholdAttackOutcome> {
    if kind == FeatureKind::Discrete {
        return Err(Error::domain(
            "boundary-distance search needs continuous features; use the Bernoulli-probe scores",
        ));
    }
    let measure = |samples: &[Sample]| -> Result<Vec<AttackRecord>> {
        samples
            .par_iter()
            .map(|sample| {
                let mut session =
                    OracleSession::with_budget(oracle, attack_seed, sample.id, cfg.query_budget);
                let mut rng = session.attacker_rng();
                let (reference, clean) = match mode {
                    AdversaryMode::Strong => (sample.label, None),
                    AdversaryMode::Weak => {
                        let label = session.query(&sample.features)?;
                        (label, Some(label))
                    }
                };
                let magnitude =
                    hsj_distance(&mut session, &sample.features, reference, clean, cfg, &mut rng)?;
                let mut record = AttackRecord::new(sample.id, reference);
                record.perturbation_magnitude = Some(magnitude);
                Ok(record)
            })
            .collect()
    };
    let mut member_records = measure(members)?;
    let mut nonmember_records = measure(nonmembers)?;

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

    /// Label-only view of a fixed hyperplane `w . x + b > 0`.
    struct LinearOracle {
        w: Vec<f64>,
        b: f64,
        queries: AtomicU64,
    }

    impl LinearOracle {
        fn new(w: Vec<f64>, b: f64) -> Self {
            LinearOracle {
                w,
                b,
                queries: AtomicU64::new(0),
            }
        }

        fn exact_distance(&self, x: &[f64]) -> f64 {
            crate::model::boundary_distance_linear(&self.w, self.b, x)
                .unwrap()
                .abs()
        }
    }

    impl LabelOracle for LinearOracle {
        fn label(&self, features: &[f64], _query_index: u64) -> Result<usize> {
            self.queries.fetch_add(1, Ordering::Relaxed);
            let score: f64 =
                self.w.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.b;
            Ok(usize::from(score > 0.0))
        }

        fn queries_used(&self) -> u64 {
            self.queries.load(Ordering::Relaxed)
        }
    }

    fn sample(id: usize, features: Vec<f64>, label: usize) -> Sample {
        Sample {
            id,
            features,
            label,
            membership: Membership::Member,
        }
    }

    #[test]
    fn misclassified_input_has_zero_distance() {
        let oracle = LinearOracle::new(vec![1.0, 0.0], -0.5);
        // x0 < 0.5 -> label 0, but reference says 1.
        let s = sample(0, vec![0.2, 0.3], 1);
        let d = min_perturbation_hsj(
            &oracle,
            &s,
            FeatureKind::Continuous,
            AdversaryMode::Strong,
            &HsjConfig::default(),
            3,
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn distance_close_to_exact_on_linear_boundary() {
        let oracle = LinearOracle::new(vec![1.0, 1.0], -1.0);
        let cfg = HsjConfig::default();
        let mut worst: f64 = 0.0;
        for (id, point) in [
            vec![0.8, 0.7],
            vec![0.9, 0.9],
            vec![0.6, 0.55],
            vec![0.75, 0.4],
        ]
        .into_iter()
        .enumerate()
        {
            let exact = oracle.exact_distance(&point);
            let s = sample(id, point, 1);
            let estimate = min_perturbation_hsj(
                &oracle,
                &s,
                FeatureKind::Continuous,
                AdversaryMode::Strong,
                &cfg,
                11,
            )
            .unwrap();
            let rel = (estimate - exact).abs() / exact;
            worst = worst.max(rel);
            assert!(
                rel < 0.10,
                "estimate {estimate} vs exact {exact} (rel {rel})"
            );
        }
        assert!(worst < 0.10, "worst relative error {worst}");
    }

    #[test]
    fn weak_mode_uses_the_oracle_label_and_never_returns_zero() {
        let oracle = LinearOracle::new(vec![1.0, 0.0], -0.5);
        // True label disagrees with the oracle: the weak adversary does not
        // know that and measures distance from the oracle's own label.
        let s = sample(0, vec![0.2, 0.3], 1);
        let d = min_perturbation_hsj(
            &oracle,
            &s,
            FeatureKind::Continuous,
            AdversaryMode::Weak,
            &HsjConfig::default(),
            3,
        )
        .unwrap();
        assert!(d > 0.0 && d.is_finite());
        // Exact distance to the plane x0 = 0.5 is 0.3.
        assert!((d - 0.3).abs() / 0.3 < 0.15, "weak distance {d}");
    }

    #[test]
    fn stays_within_query_budget() {
        let oracle = LinearOracle::new(vec![1.0, 1.0], -1.0);
        let cfg = HsjConfig {
            query_budget: 300,
            ..HsjConfig::default()
        };
        let before = oracle.queries_used();
        let s = sample(0, vec![0.9, 0.9], 1);
        let d = min_perturbation_hsj(
            &oracle,
            &s,
            FeatureKind::Continuous,
            AdversaryMode::Strong,
            &cfg,
            7,
        )
        .unwrap();
        assert!(d.is_finite());
        assert!(oracle.queries_used() - before <= 300);
    }

    #[test]
    fn failed_initialization_yields_infinite_sentinel() {
        // An oracle that always answers the reference label: no adversarial
        // point exists anywhere.
        struct ConstantOracle(AtomicU64);
        impl LabelOracle for ConstantOracle {
            fn label(&self, _features: &[f64], _q: u64) -> Result<usize> {
                self.0.fetch_add(1, Ordering::Relaxed);
                Ok(1)
            }
            fn queries_used(&self) -> u64 {
                self.0.load(Ordering::Relaxed)
            }
        }
        let oracle = ConstantOracle(AtomicU64::new(0));
        let s = sample(0, vec![0.5, 0.5], 1);
        let cfg = HsjConfig {
            init_trials: 25,
            ..HsjConfig::default()
        };
        let d = min_perturbation_hsj(
            &oracle,
            &s,
            FeatureKind::Continuous,
            AdversaryMode::Strong,
            &cfg,
            3,
        )
        .unwrap();
        assert!(d.is_infinite());
        // clean query + exactly init_trials draws
        assert_eq!(oracle.queries_used(), 26);
    }

    #[test]
    fn gradient_iterations_only_tighten_the_bound() {
        let oracle = LinearOracle::new(vec![2.0, -1.0], -0.3);
        let bisection_only = HsjConfig {
            max_iters: 0,
            ..HsjConfig::default()
        };
        let full = HsjConfig::default();
        let mut improved = 0usize;
        let total = 20usize;
        for id in 0..total {
            let point = vec![
                0.55 + 0.02 * id as f64 % 0.4,
                0.1 + 0.03 * (id as f64) % 0.5,
            ];
            let s = sample(id, point.clone(), usize::from(
                2.0 * point[0] - point[1] - 0.3 > 0.0,
            ));
            let coarse = min_perturbation_hsj(
                &oracle,
                &s,
                FeatureKind::Continuous,
                AdversaryMode::Strong,
                &bisection_only,
                17,
            )
            .unwrap();
            let refined = min_perturbation_hsj(
                &oracle,
                &s,
                FeatureKind::Continuous,
                AdversaryMode::Strong,
                &full,
                17,
            )
            .unwrap();
            if coarse >= refined - 1e-9 {
                improved += 1;
            }
        }
        assert!(
            improved as f64 / total as f64 >= 0.9,
            "full algorithm beat bisection-only on only {improved}/{total}"
        );
    }

    #[test]
    fn discrete_features_are_rejected() {
        let oracle = LinearOracle::new(vec![1.0], 0.0);
        let s = sample(0, vec![1.0], 1);
        assert!(min_perturbation_hsj(
            &oracle,
            &s,
            FeatureKind::Discrete,
            AdversaryMode::Strong,
            &HsjConfig::default(),
            3
        )
        .is_err());
    }

    #[test]
    fn threshold_attack_separates_margins() {
        // Members sit deep inside the positive half-space, nonmembers near
        // the boundary: the learned threshold should separate them cleanly.
        let oracle = LinearOracle::new(vec![1.0, 0.0], -0.5);
        let members: Vec<Sample> = (0..6)
            .map(|i| sample(i, vec![0.95 - 0.005 * i as f64, 0.5], 1))
            .collect();
        let nonmembers: Vec<Sample> = (6..12)
            .map(|i| sample(i, vec![0.56 + 0.005 * (i - 6) as f64, 0.5], 1))
            .collect();
        let outcome = threshold_attack(
            &oracle,
            &members,
            &nonmembers,
            FeatureKind::Continuous,
            AdversaryMode::Strong,
            &HsjConfig::default(),
            29,
        )
        .unwrap();
        assert_eq!(outcome.stats.true_positives, 6);
        assert_eq!(outcome.stats.true_negatives, 6);
        assert_eq!(outcome.excluded_members, 0);
        assert!(outcome
            .members
            .iter()
            .all(|r| r.verdict == Some(Membership::Member)));
    }

    #[test]
    fn threshold_attack_is_parallel_deterministic() {
        let oracle = LinearOracle::new(vec![1.0, 1.0], -1.0);
        let members: Vec<Sample> = (0..4)
            .map(|i| sample(i, vec![0.9, 0.8 - 0.02 * i as f64], 1))
            .collect();
        let nonmembers: Vec<Sample> = (4..8)
            .map(|i| sample(i, vec![0.55, 0.5 + 0.01 * (i - 4) as f64], 1))
            .collect();
        let run = || {
            threshold_attack(
                &oracle,
                &members,
                &nonmembers,
                FeatureKind::Continuous,
                AdversaryMode::Strong,
                &HsjConfig::default(),
                5,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.rule, b.rule);
        assert_eq!(a.members, b.members);
        assert_eq!(a.nonmembers, b.nonmembers);
    }
}
