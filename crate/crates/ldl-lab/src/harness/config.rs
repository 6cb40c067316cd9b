//! Experiment configuration: a single TOML document with nested sections.
//! Unknown keys are hard errors everywhere, since a silently ignored knob
//! would invalidate ASR comparisons.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{AdversaryMode, HsjConfig};
use crate::dataset::{FeatureKind, SplitSpec};
use crate::defense::NoiseSpec;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, TrainConfig};

/// Where the experiment's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs {
        dims: usize,
        classes: usize,
        samples: usize,
        spread: f64,
        label_noise: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        feature_kind: FeatureKind,
    },
}

/// Defense selection: none, or a noise spec plus ensemble size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefenseConfig {
    None,
    Gaussian { sigma2: f64, k: usize },
    BernoulliFlip { p: f64, k: usize },
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig::None
    }
}

impl DefenseConfig {
    /// The noise/ensemble pair to wrap the target in. `None` maps to the
    /// degenerate zero-noise single-pass ensemble.
    pub fn noise_and_k(&self) -> (NoiseSpec, usize) {
        match *self {
            DefenseConfig::None => (NoiseSpec::Gaussian { sigma2: 0.0 }, 1),
            DefenseConfig::Gaussian { sigma2, k } => (NoiseSpec::Gaussian { sigma2 }, k),
            DefenseConfig::BernoulliFlip { p, k } => (NoiseSpec::BernoulliFlip { p }, k),
        }
    }
}

/// Which attacks to mount.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Gap,
    ThresholdHsj,
    RandomNoise,
    Substitute,
    Fgs,
}

fn default_k_probe() -> usize {
    50
}

fn default_fgs_epsilons() -> Vec<f64> {
    vec![0.0, 0.025, 0.05, 0.1, 0.2]
}

/// Attack selection and budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kinds: Vec<AttackKind>,
    pub mode: AdversaryMode,
    /// Perturbed variants per probe variance in the score attacks.
    #[serde(default = "default_k_probe")]
    pub k_probe: usize,
    /// Ascending probe variances; empty selects the default 10-point
    /// logarithmic grid.
    #[serde(default)]
    pub probe_grid: Vec<f64>,
    #[serde(default)]
    pub hsj: HsjConfig,
    #[serde(default = "default_fgs_epsilons")]
    pub fgs_epsilons: Vec<f64>,
    /// Split of the leftover (non-evaluation) pool that the substitute
    /// adversary trains on; required when `kinds` includes `substitute`.
    #[serde(default)]
    pub substitute_split: Option<SplitSpec>,
}

fn default_sweep_k() -> usize {
    100
}

/// Variance sweep for the `sweep` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Smoothing variances, ascending.
    pub sigma2: Vec<f64>,
    /// Defense ensemble size at each nonzero variance.
    #[serde(default = "default_sweep_k")]
    pub k: usize,
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Report path; CSV exports derive from its stem. Overridable with
    /// `--output`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub split: SplitSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub defense: DefenseConfig,
    pub attack: AttackConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetConfig::Blobs {
                dims,
                classes,
                samples,
                spread,
                label_noise,
                ..
            } => {
                if *dims == 0 || *classes == 0 || *samples < *classes {
                    return Err(Error::Config("invalid blob generator dimensions".into()));
                }
                if !(*spread > 0.0) || !(0.0..=1.0).contains(label_noise) {
                    return Err(Error::Config("invalid blob spread or label_noise".into()));
                }
            }
            DatasetConfig::Csv { path, .. } => {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "dataset file not found: {}",
                        path.display()
                    )));
                }
            }
        }
        self.model.validate()?;
        self.train.validate()?;
        match self.defense {
            DefenseConfig::None => {}
            DefenseConfig::Gaussian { sigma2, k } => {
                if !(sigma2 >= 0.0) || k == 0 {
                    return Err(Error::Config("invalid gaussian defense parameters".into()));
                }
            }
            DefenseConfig::BernoulliFlip { p, k } => {
                if !(0.0..=1.0).contains(&p) || k == 0 {
                    return Err(Error::Config("invalid bernoulli defense parameters".into()));
                }
            }
        }
        if self.attack.kinds.is_empty() {
            return Err(Error::Config("attack.kinds must not be empty".into()));
        }
        if self.attack.k_probe == 0 {
            return Err(Error::Config("attack.k_probe must be >= 1".into()));
        }
        if self.attack.probe_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("attack.probe_grid must be ascending".into()));
        }
        if self.attack.mode == AdversaryMode::Weak
            && self.attack.kinds.contains(&AttackKind::Gap)
        {
            return Err(Error::Config(
                "the gap attack needs true labels; it cannot run in weak mode".into(),
            ));
        }
        if self.attack.kinds.contains(&AttackKind::Substitute)
            && self.attack.substitute_split.is_none()
        {
            return Err(Error::Config(
                "attack.substitute_split is required for the substitute attack".into(),
            ));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.sigma2.is_empty() || sweep.k == 0 {
                return Err(Error::Config("sweep needs variances and k >= 1".into()));
            }
            if sweep.sigma2.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config("sweep.sigma2 must be strictly ascending".into()));
            }
        }
        Ok(())
    }

    /// Probe grid with the default applied.
    pub fn probe_grid(&self) -> Vec<f64> {
        if self.attack.probe_grid.is_empty() {
            crate::attacks::default_probe_grid()
        } else {
            self.attack.probe_grid.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn minimal_toml() -> String {
        r#"
            master_seed = 7

            [dataset]
            kind = "blobs"
            dims = 4
            classes = 2
            samples = 120
            spread = 0.2
            label_noise = 0.1
            seed = 3

            [split]
            member_count = 40
            nonmember_count = 40
            seed = 5

            [model]
            layer_dims = [4, 16, 2]
            activations = ["relu"]
            seed = 11

            [train]
            epochs = 30
            learning_rate = 0.001
            batch_size = 16
            weight_decay = 0.0
            optimizer = "adam"

            [attack]
            kinds = ["gap"]
            mode = "strong"
        "#
        .to_string()
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = ExperimentConfig::from_toml_str(&minimal_toml()).unwrap();
        assert_eq!(config.master_seed, 7);
        assert_eq!(config.defense, DefenseConfig::None);
        assert_eq!(config.attack.k_probe, 50);
        assert_eq!(config.probe_grid().len(), 10);
        assert_eq!(config.attack.hsj, HsjConfig::default());
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let text = minimal_toml().replace("master_seed = 7", "master_seed = 7\ntypo_key = 1");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        // ... including inside nested sections
        let text = minimal_toml().replace("epochs = 30", "epochs = 30\nmomentum = 0.9");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn gap_attack_in_weak_mode_is_rejected() {
        let text = minimal_toml().replace("mode = \"strong\"", "mode = \"weak\"");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn defense_section_round_trips() {
        let text = minimal_toml()
            + r#"
            [defense]
            kind = "gaussian"
            sigma2 = 0.02
            k = 100
        "#;
        let config = ExperimentConfig::from_toml_str(&text).unwrap();
        let (noise, k) = config.defense.noise_and_k();
        assert_eq!(noise, NoiseSpec::Gaussian { sigma2: 0.02 });
        assert_eq!(k, 100);
    }

    #[test]
    fn missing_csv_is_a_config_error() {
        let text = minimal_toml().replace(
            "kind = \"blobs\"\n            dims = 4\n            classes = 2\n            samples = 120\n            spread = 0.2\n            label_noise = 0.1\n            seed = 3",
            "kind = \"csv\"\n            path = \"/nonexistent/data.csv\"\n            label_column = \"label\"\n            feature_kind = \"continuous\"",
        );
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("not found"), "{err}");
    }
}
