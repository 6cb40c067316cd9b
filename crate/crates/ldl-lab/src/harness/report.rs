//! Machine-readable experiment reports.
//!
//! A report is one JSON document with a stable schema: every field is
//! present in every run, with attacks that did not execute serialized as
//! explicit nulls. Flat CSV exports (attack records, the ASR table)
//! accompany it for plotting. Re-running a config reproduces the report
//! byte-for-byte once the timing fields are stripped; see
//! [`canonical_without_timings`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::metrics::{ConfusionStats, FitObservation, HCurve, Rates};

/// Per-attack summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub confusion: ConfusionStats,
    pub rates: Rates,
    pub asr: f64,
    /// Learned threshold, formatted as text so the infinite extremes
    /// survive JSON.
    pub threshold: Option<String>,
    /// Infinite-sentinel records excluded from threshold fitting (still
    /// counted as members in the confusion table).
    pub excluded_members: usize,
    pub excluded_nonmembers: usize,
    /// Path of the records CSV, when exported.
    pub records_csv: Option<String>,
}

/// Substitute attack adds the local calibration result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstituteReport {
    pub transfer: AttackReport,
    /// ASR of the same attack against the adversary's local substitute.
    pub local_asr: f64,
}

/// FGS robustness probe: misclassification rates per epsilon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FgsReport {
    pub epsilons: Vec<f64>,
    pub member_misclassification: Vec<f64>,
    pub nonmember_misclassification: Vec<f64>,
}

/// All attack slots, always serialized (null when not run).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackReports {
    pub gap: Option<AttackReport>,
    pub threshold_hsj: Option<AttackReport>,
    pub random_noise: Option<AttackReport>,
    pub substitute: Option<SubstituteReport>,
    pub fgs: Option<FgsReport>,
}

/// One row of the variance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrRow {
    pub sigma2: f64,
    pub asr: f64,
    pub tpr: f64,
    pub fpr: f64,
    /// Smoothed-model accuracies at this variance.
    pub acc_member: f64,
    pub acc_nonmember: f64,
}

/// A fitted curve with its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub curve: HCurve,
    pub residual_norm: f64,
    pub degenerate: bool,
    pub observations: Vec<FitObservation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FittedCurves {
    pub h1: Option<FitReport>,
    pub h2: Option<FitReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureInfo {
    pub stage: String,
    pub message: String,
}

/// The experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    /// Base-model accuracy on the member pool (`Acc_mem`).
    pub acc_member: Option<f64>,
    /// Base-model accuracy on the nonmember pool (`Acc_nonmem`).
    pub acc_nonmember: Option<f64>,
    /// `0.5 + (Acc_mem - Acc_nonmem) / 2` on the undefended model.
    pub asr_gap_baseline: Option<f64>,
    pub attacks: AttackReports,
    pub asr_table: Option<Vec<AsrRow>>,
    pub fitted: Option<FittedCurves>,
    pub total_oracle_queries: u64,
    pub timing_ms: Vec<StageTiming>,
    pub created_unix_ms: u64,
    pub failure: Option<FailureInfo>,
}

impl EvalReport {
    pub fn new(config: ExperimentConfig) -> Self {
        EvalReport {
            config,
            acc_member: None,
            acc_nonmember: None,
            asr_gap_baseline: None,
            attacks: AttackReports::default(),
            asr_table: None,
            fitted: None,
            total_oracle_queries: 0,
            timing_ms: Vec::new(),
            created_unix_ms: now_unix_ms(),
            failure: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// CSV view of the ASR table.
pub fn asr_table_csv(rows: &[AsrRow]) -> String {
    let mut out = String::from("sigma2,asr,tpr,fpr,acc_member,acc_nonmember\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.sigma2, r.asr, r.tpr, r.fpr, r.acc_member, r.acc_nonmember
        ));
    }
    out
}

fn now_unix_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Serialized report with the wall-clock fields removed: two runs of the
/// same config compare byte-identical on this form.
pub fn canonical_without_timings(report_json: &str) -> Result<String> {
    let mut value: serde_json::Value = serde_json::from_str(report_json)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("timing_ms");
        map.remove("created_unix_ms");
    }
    Ok(serde_json::to_string_pretty(&value)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
            master_seed = 1
            [dataset]
            kind = "blobs"
            dims = 2
            classes = 2
            samples = 20
            spread = 0.1
            label_noise = 0.0
            seed = 1
            [split]
            member_count = 5
            nonmember_count = 5
            seed = 1
            [model]
            layer_dims = [2, 4, 2]
            activations = ["relu"]
            seed = 1
            [train]
            epochs = 1
            learning_rate = 0.01
            batch_size = 4
            weight_decay = 0.0
            optimizer = "sgd"
            [attack]
            kinds = ["gap"]
            mode = "strong"
        "#,
        )
        .unwrap()
    }

    #[test]
    fn schema_is_stable_with_nulls() {
        let report = EvalReport::new(dummy_config());
        let json = report.to_json().unwrap();
        // Absent attacks appear as explicit nulls rather than vanishing.
        for key in ["gap", "threshold_hsj", "random_noise", "substitute", "fgs"] {
            assert!(json.contains(&format!("\"{key}\": null")), "missing {key}");
        }
        assert!(json.contains("\"asr_table\": null"));
        assert!(json.contains("\"fitted\": null"));
        assert!(json.contains("\"failure\": null"));
        let back = EvalReport::from_json(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn canonical_form_strips_timings_only() {
        let mut a = EvalReport::new(dummy_config());
        let mut b = EvalReport::new(dummy_config());
        a.timing_ms.push(StageTiming {
            stage: "train".into(),
            millis: 120,
        });
        b.timing_ms.push(StageTiming {
            stage: "train".into(),
            millis: 7,
        });
        b.created_unix_ms = a.created_unix_ms + 5000;
        let ca = canonical_without_timings(&a.to_json().unwrap()).unwrap();
        let cb = canonical_without_timings(&b.to_json().unwrap()).unwrap();
        assert_eq!(ca, cb);

        b.total_oracle_queries = 99;
        let cb = canonical_without_timings(&b.to_json().unwrap()).unwrap();
        assert_ne!(ca, cb);
    }

    #[test]
    fn asr_table_csv_layout() {
        let rows = vec![AsrRow {
            sigma2: 0.01,
            asr: 0.8,
            tpr: 0.9,
            fpr: 0.3,
            acc_member: 0.99,
            acc_nonmember: 0.7,
        }];
        let csv = asr_table_csv(&rows);
        assert_eq!(
            csv,
            "sigma2,asr,tpr,fpr,acc_member,acc_nonmember\n0.01,0.8,0.9,0.3,0.99,0.7\n"
        );
    }
}
