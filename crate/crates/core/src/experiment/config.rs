use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{SplitSpec, TrainingMode};
use crate::error::{Error, Result};
use crate::federation::{AlignmentSchedule, Strategy, TrainConfig};
use crate::model::Fusion;
use crate::nn::OptimizerKind;

/// Flat experiment description, read from a TOML file. Unknown keys are errors.
///
/// ```toml
/// dataset = "data/ml-latest-small/ratings.csv"
/// common_fraction = 0.5
/// c1_feature_fraction = 0.5
/// c1_user_fraction = 0.5
/// strategies = ["centralized", "fedavg", "feddmf", "random"]
/// seeds = [1, 2, 3]
/// epochs = 30
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub output: PathBuf,
    pub common_fraction: f64,
    pub c1_feature_fraction: f64,
    pub c1_user_fraction: f64,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub save_checkpoints: bool,

    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub beta: f64,
    pub negatives_per_positive: usize,
    pub dropout_rate: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub threshold: f64,
    pub optimizer: OptimizerKind,
    pub fusion: Fusion,
    pub alignment_schedule: AlignmentSchedule,
    pub training_mode: TrainingMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        ExperimentConfig {
            dataset: PathBuf::from("data/ml-latest-small/ratings.csv"),
            output: PathBuf::from("results"),
            common_fraction: 0.5,
            c1_feature_fraction: 0.5,
            c1_user_fraction: 0.5,
            strategies: Strategy::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            save_checkpoints: false,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            margin: t.margin,
            beta: t.beta,
            negatives_per_positive: t.negatives_per_positive,
            dropout_rate: t.dropout_rate,
            embed_dim: t.embed_dim,
            hidden_dim: t.hidden_dim,
            threshold: t.threshold,
            optimizer: t.optimizer,
            fusion: t.fusion,
            alignment_schedule: t.alignment_schedule,
            training_mode: t.training_mode,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec::new(self.common_fraction, self.c1_feature_fraction, self.c1_user_fraction, seed)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            margin: self.margin,
            beta: self.beta,
            negatives_per_positive: self.negatives_per_positive,
            dropout_rate: self.dropout_rate,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            threshold: self.threshold,
            seed,
            optimizer: self.optimizer,
            fusion: self.fusion,
            alignment_schedule: self.alignment_schedule,
            training_mode: self.training_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.split_spec(0).validate()?;
        self.train_config(0).validate()?;
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies must not be empty".into()));
        }
        if self.strategies.iter().collect::<BTreeSet<_>>().len() != self.strategies.len() {
            return Err(Error::Config("strategies contains duplicates".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config("seeds contains duplicates".into()));
        }
        Ok(())
    }
}

/// The split fraction a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    CommonFraction,
    C1UserFraction,
    C1FeatureFraction,
}

impl SweepAxis {
    pub const DEFAULT_VALUES: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::CommonFraction => "common_fraction",
            SweepAxis::C1UserFraction => "c1_user_fraction",
            SweepAxis::C1FeatureFraction => "c1_feature_fraction",
        }
    }

    /// `config` with this axis set to `value`.
    pub fn apply(self, config: &ExperimentConfig, value: f64) -> ExperimentConfig {
        let mut c = config.clone();
        match self {
            SweepAxis::CommonFraction => c.common_fraction = value,
            SweepAxis::C1UserFraction => c.c1_user_fraction = value,
            SweepAxis::C1FeatureFraction => c.c1_feature_fraction = value,
        }
        c
    }

    pub fn validate_values(self, values: &[f64]) -> Result<()> {
        if values.is_empty() {
            return Err(Error::Config(format!("no values given for sweep axis {}", self.name())));
        }
        for &v in values {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("sweep value {v} for {} outside (0, 1)", self.name())));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::CommonFraction, SweepAxis::C1UserFraction, SweepAxis::C1FeatureFraction]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sweep axis `{s}` (expected common_fraction, c1_user_fraction or c1_feature_fraction)"
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ExperimentConfig::parse("epochz = 3").unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "common_fraction = 1.0",
            "margin = 1.5",
            "strategies = []",
            "seeds = [1, 1]",
            "strategies = [\"feddmf\", \"feddmf\"]",
            "strategies = [\"dmf\"]",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ExperimentConfig {
            epochs: 3,
            strategies: vec![Strategy::FedDmf, Strategy::Random],
            optimizer: OptimizerKind::Adam,
            ..Default::default()
        };
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn sweep_axis_values() {
        let axis: SweepAxis = "c1_user_fraction".parse().unwrap();
        assert_eq!(axis.apply(&ExperimentConfig::default(), 0.2).c1_user_fraction, 0.2);
        assert!(axis.validate_values(&[0.1, 1.0]).is_err());
        assert!(axis.validate_values(&[]).is_err());
        axis.validate_values(&SweepAxis::DEFAULT_VALUES).unwrap();
        assert!("users".parse::<SweepAxis>().is_err());
    }
}
