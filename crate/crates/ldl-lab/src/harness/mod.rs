//! Config-driven experiment orchestration.
//!
//! A run executes stages in order (dataset, split, train, defend, attacks,
//! evaluate), timing each one, and produces an [`EvalReport`]. Every
//! stochastic stage seeds from `(master seed, stage label)` and every
//! per-sample stream from `(stage seed, sample id)`, so re-running a config
//! reproduces every count exactly; stage failures mark the report and
//! propagate with the stage name attached.

pub mod config;
pub mod report;

pub use config::{
    AttackConfig, AttackKind, DatasetConfig, DefenseConfig, ExperimentConfig, SweepConfig,
};
pub use report::{
    asr_table_csv, canonical_without_timings, AsrRow, AttackReport, AttackReports, EvalReport,
    FailureInfo, FgsReport, FitReport, FittedCurves, StageTiming, SubstituteReport,
};

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::attacks::{
    fgs_misclassification_rate, gap_attack, random_noise_threshold_attack, records_to_csv,
    substitute_attack, threshold_attack, AttackRecord, SubstituteConfig, ThresholdAttackOutcome,
};
use crate::dataset::{generate_blobs, load_csv, split, split_remainder, Dataset, Membership};
use crate::defense::{LabelOracle, NoiseSpec, SmoothedClassifier};
use crate::error::{Error, Result};
use crate::metrics::{asr, asr_gap, rates, ConfusionStats, FitObservation, HFamily};
use crate::model::{train, TrainedModel};
use crate::seeds;

/// Run the full experiment described by `config`; writes the report (and
/// CSV exports) to `config.output` when set. On a stage failure the partial
/// report is still written, with the failure marker filled in.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    let mut report = EvalReport::new(config.clone());
    let result = run_stages(config, &mut report, false);
    finish(config, report, result)
}

/// Like [`run_experiment`], but replaces the attack stage with the
/// variance sweep: the random-noise attack is mounted against the target
/// defended at each configured `sigma2`, producing the ASR table.
pub fn run_sweep(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    if config.sweep.is_none() {
        return Err(Error::Config("sweep requires a [sweep] section".into()));
    }
    let mut report = EvalReport::new(config.clone());
    let result = run_stages(config, &mut report, true);
    finish(config, report, result)
}

/// Dataset + split + train only; saves the weight file to `model_path`.
pub fn run_train(config: &ExperimentConfig, model_path: &Path) -> Result<(f64, f64)> {
    config.validate()?;
    let mut clock = StageClock::default();
    let dataset = clock.run("dataset", || build_dataset(config))?;
    let (members, nonmembers) =
        clock.run("split", || split(&dataset, &config.split))?;
    let outcome = clock.run("train", || train(&members, &config.model, &config.train))?;
    crate::model::save_model(&outcome.model, model_path)?;
    let test_accuracy = outcome.model.accuracy(&nonmembers)?;
    Ok((outcome.final_train_accuracy, test_accuracy))
}

/// Fit both `h` families to a sweep report's ASR table and append them.
/// The anchor TPR/FPR pair is taken from the zero-variance row (or the
/// first row when no exact zero is present), matching the model where all
/// variance dependence lives in `h`.
pub fn append_fits(report: &mut EvalReport) -> Result<()> {
    let table = report
        .asr_table
        .as_ref()
        .ok_or_else(|| Error::invalid("report has no ASR table; run a sweep first"))?;
    if table.len() < 3 {
        return Err(Error::invalid("need at least 3 sweep rows to fit h1"));
    }
    let anchor = table
        .iter()
        .find(|r| r.sigma2 == 0.0)
        .unwrap_or(&table[0]);
    let observations: Vec<FitObservation> = table
        .iter()
        .map(|r| FitObservation {
            sigma2: r.sigma2,
            asr: r.asr,
            tpr: anchor.tpr,
            fpr: anchor.fpr,
        })
        .collect();

    let mut fitted = FittedCurves::default();
    let h1 = crate::metrics::fit_h(&observations, HFamily::H1)?;
    fitted.h1 = Some(FitReport {
        curve: h1.curve,
        residual_norm: h1.residual_norm,
        degenerate: h1.degenerate,
        observations: observations.clone(),
    });
    if observations.len() >= 5 {
        let h2 = crate::metrics::fit_h(&observations, HFamily::H2)?;
        fitted.h2 = Some(FitReport {
            curve: h2.curve,
            residual_norm: h2.residual_norm,
            degenerate: h2.degenerate,
            observations,
        });
    }
    report.fitted = Some(fitted);
    Ok(())
}

#[derive(Default)]
struct StageClock {
    timings: Vec<StageTiming>,
}

impl StageClock {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let result = f().map_err(|e| e.in_stage(stage));
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            millis: start.elapsed().as_millis() as u64,
        });
        result
    }
}

fn finish(
    config: &ExperimentConfig,
    mut report: EvalReport,
    result: Result<()>,
) -> Result<EvalReport> {
    match result {
        Ok(()) => {
            if let Some(path) = &config.output {
                report.write(path)?;
            }
            Ok(report)
        }
        Err(e) => {
            let stage = match &e {
                Error::Stage { stage, .. } => stage.clone(),
                _ => "setup".to_string(),
            };
            report.failure = Some(FailureInfo {
                stage,
                message: e.to_string(),
            });
            if let Some(path) = &config.output {
                // Best effort: the partial report matters more than a
                // secondary write error.
                let _ = report.write(path);
            }
            Err(e)
        }
    }
}

fn build_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.dataset {
        DatasetConfig::Blobs {
            dims,
            classes,
            samples,
            spread,
            label_noise,
            seed,
        } => generate_blobs(*dims, *classes, *samples, *spread, *label_noise, *seed),
        DatasetConfig::Csv {
            path,
            label_column,
            feature_kind,
        } => load_csv(path, label_column, *feature_kind),
    }
}

/// Confusion table from verdict-carrying records measured on known pools.
fn stats_from_verdicts(
    member_records: &[AttackRecord],
    nonmember_records: &[AttackRecord],
) -> Result<ConfusionStats> {
    let mut stats = ConfusionStats {
        true_positives: 0,
        false_negatives: 0,
        true_negatives: 0,
        false_positives: 0,
    };
    for r in member_records {
        match r.verdict {
            Some(Membership::Member) => stats.true_positives += 1,
            Some(Membership::Nonmember) => stats.false_negatives += 1,
            None => return Err(Error::invalid("record without verdict")),
        }
    }
    for r in nonmember_records {
        match r.verdict {
            Some(Membership::Member) => stats.false_positives += 1,
            Some(Membership::Nonmember) => stats.true_negatives += 1,
            None => return Err(Error::invalid("record without verdict")),
        }
    }
    Ok(stats)
}

fn attack_report(
    stats: ConfusionStats,
    threshold: Option<String>,
    excluded: (usize, usize),
    records_csv: Option<String>,
) -> Result<AttackReport> {
    let r = rates(&stats)?;
    Ok(AttackReport {
        confusion: stats,
        rates: r,
        asr: asr(r.tpr, r.tnr)?,
        threshold,
        excluded_members: excluded.0,
        excluded_nonmembers: excluded.1,
        records_csv,
    })
}

fn outcome_report(
    outcome: &ThresholdAttackOutcome,
    records_csv: Option<String>,
) -> Result<AttackReport> {
    attack_report(
        outcome.stats,
        Some(format!("{}", outcome.rule.tau)),
        (outcome.excluded_members, outcome.excluded_nonmembers),
        records_csv,
    )
}

/// Smoothed-model accuracy, measured on the defender's own stream (not
/// counted as attack queries).
fn smoothed_accuracy(g: &SmoothedClassifier, samples: &[crate::dataset::Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("accuracy over no samples"));
    }
    let mut correct = 0usize;
    for s in samples {
        let stream = seeds::mix(0xACC0_0ACC, s.id as u64);
        if g.smooth_predict(&s.features, stream)?.0 == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

fn csv_path(output: &Path, suffix: &str) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "report".to_string());
    output.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn run_stages(config: &ExperimentConfig, report: &mut EvalReport, sweep: bool) -> Result<()> {
    let mut clock = StageClock::default();

    let dataset = clock.run("dataset", || build_dataset(config))?;
    let (members, nonmembers) = clock.run("split", || split(&dataset, &config.split))?;
    let outcome = clock.run("train", || train(&members, &config.model, &config.train))?;
    let model = outcome.model;

    // Undefended accuracies anchor the gap baseline regardless of defense.
    clock.run("evaluate", || {
        report.acc_member = Some(model.accuracy(&members)?);
        report.acc_nonmember = Some(model.accuracy(&nonmembers)?);
        report.asr_gap_baseline = Some(asr_gap(
            report.acc_member.unwrap(),
            report.acc_nonmember.unwrap(),
        )?);
        Ok(())
    })?;

    if sweep {
        run_sweep_stage(config, report, &mut clock, &model, &members, &nonmembers)?;
    } else {
        run_attack_stages(
            config, report, &mut clock, &dataset, &model, &members, &nonmembers,
        )?;
    }

    report.timing_ms = std::mem::take(&mut clock.timings);
    Ok(())
}

fn run_attack_stages(
    config: &ExperimentConfig,
    report: &mut EvalReport,
    clock: &mut StageClock,
    dataset: &Dataset,
    model: &TrainedModel,
    members: &Dataset,
    nonmembers: &Dataset,
) -> Result<()> {
    let (noise, k) = config.defense.noise_and_k();
    let oracle = clock.run("defend", || {
        SmoothedClassifier::new(
            model.clone(),
            noise,
            k,
            seeds::stage_seed(config.master_seed, "defense"),
            dataset.feature_kind,
        )
    })?;

    let mode = config.attack.mode;
    let grid = config.probe_grid();
    let output = config.output.as_deref();

    for kind in &config.attack.kinds {
        match kind {
            AttackKind::Gap => {
                clock.run("attack:gap", || {
                    let seed = seeds::stage_seed(config.master_seed, "attack:gap");
                    let member_records = gap_attack(&oracle, &members.samples, mode, seed)?;
                    let nonmember_records = gap_attack(&oracle, &nonmembers.samples, mode, seed)?;
                    let stats = stats_from_verdicts(&member_records, &nonmember_records)?;
                    let csv = export_records(output, "gap", &member_records, &nonmember_records)?;
                    report.attacks.gap = Some(attack_report(stats, None, (0, 0), csv)?);
                    Ok(())
                })?;
            }
            AttackKind::ThresholdHsj => {
                clock.run("attack:threshold_hsj", || {
                    let seed = seeds::stage_seed(config.master_seed, "attack:threshold_hsj");
                    let outcome = threshold_attack(
                        &oracle,
                        &members.samples,
                        &nonmembers.samples,
                        dataset.feature_kind,
                        mode,
                        &config.attack.hsj,
                        seed,
                    )?;
                    let csv = export_records(
                        output,
                        "threshold_hsj",
                        &outcome.members,
                        &outcome.nonmembers,
                    )?;
                    report.attacks.threshold_hsj = Some(outcome_report(&outcome, csv)?);
                    Ok(())
                })?;
            }
            AttackKind::RandomNoise => {
                clock.run("attack:random_noise", || {
                    let seed = seeds::stage_seed(config.master_seed, "attack:random_noise");
                    let outcome = random_noise_threshold_attack(
                        &oracle,
                        &members.samples,
                        &nonmembers.samples,
                        dataset.feature_kind,
                        &grid,
                        config.attack.k_probe,
                        mode,
                        seed,
                    )?;
                    let csv = export_records(
                        output,
                        "random_noise",
                        &outcome.members,
                        &outcome.nonmembers,
                    )?;
                    report.attacks.random_noise = Some(outcome_report(&outcome, csv)?);
                    Ok(())
                })?;
            }
            AttackKind::Substitute => {
                clock.run("attack:substitute", || {
                    let seed = seeds::stage_seed(config.master_seed, "attack:substitute");
                    let adversary_pool = split_remainder(dataset, &config.split)?;
                    let sub_config = SubstituteConfig {
                        split: config.attack.substitute_split.expect("validated"),
                        model_spec: config.model.clone(),
                        train_config: config.train,
                    };
                    let outcome = substitute_attack(
                        &oracle,
                        &adversary_pool,
                        &sub_config,
                        &members.samples,
                        &nonmembers.samples,
                        mode,
                        &config.attack.hsj,
                        seed,
                    )?;
                    let csv = export_records(
                        output,
                        "substitute",
                        &outcome.members,
                        &outcome.nonmembers,
                    )?;
                    let local_rates = rates(&outcome.local_stats)?;
                    report.attacks.substitute = Some(SubstituteReport {
                        transfer: attack_report(
                            outcome.stats,
                            Some(format!("{}", outcome.rule.tau)),
                            (0, 0),
                            csv,
                        )?,
                        local_asr: asr(local_rates.tpr, local_rates.tnr)?,
                    });
                    Ok(())
                })?;
            }
            AttackKind::Fgs => {
                clock.run("attack:fgs", || {
                    let seed = seeds::stage_seed(config.master_seed, "attack:fgs");
                    let mut member_rates = Vec::new();
                    let mut nonmember_rates = Vec::new();
                    for &eps in &config.attack.fgs_epsilons {
                        member_rates.push(fgs_misclassification_rate(
                            model,
                            &oracle,
                            &members.samples,
                            eps,
                            mode,
                            seed,
                        )?);
                        nonmember_rates.push(fgs_misclassification_rate(
                            model,
                            &oracle,
                            &nonmembers.samples,
                            eps,
                            mode,
                            seed,
                        )?);
                    }
                    report.attacks.fgs = Some(FgsReport {
                        epsilons: config.attack.fgs_epsilons.clone(),
                        member_misclassification: member_rates,
                        nonmember_misclassification: nonmember_rates,
                    });
                    Ok(())
                })?;
            }
        }
    }

    report.total_oracle_queries = oracle.queries_used();
    Ok(())
}

fn run_sweep_stage(
    config: &ExperimentConfig,
    report: &mut EvalReport,
    clock: &mut StageClock,
    model: &TrainedModel,
    members: &Dataset,
    nonmembers: &Dataset,
) -> Result<()> {
    let sweep = config.sweep.as_ref().expect("checked by caller");
    let grid = config.probe_grid();
    let mut rows = Vec::with_capacity(sweep.sigma2.len());
    let mut total_queries = 0u64;

    for (level, &sigma2) in sweep.sigma2.iter().enumerate() {
        let row = clock.run(&format!("sweep:{sigma2}"), || {
            let k = if sigma2 == 0.0 { 1 } else { sweep.k };
            let oracle = SmoothedClassifier::new(
                model.clone(),
                NoiseSpec::Gaussian { sigma2 },
                k,
                seeds::stage_seed(config.master_seed, &format!("defense-sweep:{level}")),
                members.feature_kind,
            )?;
            let seed = seeds::stage_seed(config.master_seed, &format!("attack-sweep:{level}"));
            let outcome = random_noise_threshold_attack(
                &oracle,
                &members.samples,
                &nonmembers.samples,
                members.feature_kind,
                &grid,
                config.attack.k_probe,
                config.attack.mode,
                seed,
            )?;
            let r = rates(&outcome.stats)?;
            let row = AsrRow {
                sigma2,
                asr: asr(r.tpr, r.tnr)?,
                tpr: r.tpr,
                fpr: r.fpr,
                acc_member: smoothed_accuracy(&oracle, &members.samples)?,
                acc_nonmember: smoothed_accuracy(&oracle, &nonmembers.samples)?,
            };
            total_queries += oracle.queries_used();
            Ok(row)
        })?;
        rows.push(row);
    }

    report.asr_table = Some(rows);
    report.total_oracle_queries = total_queries;

    if let (Some(path), Some(rows)) = (&config.output, &report.asr_table) {
        std::fs::write(csv_path(path, "asr_table"), asr_table_csv(rows))?;
    }
    Ok(())
}

fn export_records(
    output: Option<&Path>,
    attack: &str,
    members: &[AttackRecord],
    nonmembers: &[AttackRecord],
) -> Result<Option<String>> {
    let Some(output) = output else {
        return Ok(None);
    };
    let path = csv_path(output, &format!("{attack}.records"));
    let mut all: Vec<AttackRecord> = members.to_vec();
    all.extend_from_slice(nonmembers);
    std::fs::write(&path, records_to_csv(&all))?;
    Ok(Some(
        path.file_name().unwrap().to_string_lossy().to_string(),
    ))
}
