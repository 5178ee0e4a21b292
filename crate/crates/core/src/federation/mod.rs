//! Training strategies over a [`FederatedSplit`](crate::data::FederatedSplit).
//!
//! - [`Strategy::Centralized`]: one model sees both clients' training blocks.
//! - [`Strategy::FedAvg`]: one global model, rebuilt each round as the mean of
//!   the clients' locally trained copies.
//! - [`Strategy::FedDmf`]: one private model per client; each round the
//!   clients swap only the embedding rows of the common features and pull
//!   their own rows towards the peer's with a cosine-margin penalty.
//! - [`Strategy::Random`]: uniform scores.
//!
//! A round is one local epoch per client.

mod audit;
mod evaluate;
mod strategies;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::TrainingMode;
use crate::error::{Error, Result};
use crate::model::{Fusion, ModelShape};
use crate::nn::OptimizerKind;

pub use audit::{ExchangeLog, ExchangeRecord, Party, PayloadKind, SharedEmbeddings};
pub use evaluate::{evaluate, random_baseline, ClientEval, Phase, Trained};
pub use strategies::{
    fedavg_rounds, predict_cross_client, run_strategy, train_centralized, train_fedavg, train_feddmf, train_independent,
    FedDmf, RoundStats, StrategyOutcome,
};
pub use trainer::{Alignment, EpochStats, LocalTrainer, UserRows};

/// When the embedding-alignment penalty is applied during a local epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentSchedule {
    /// Added to every batch's loss.
    #[default]
    PerBatch,
    /// One extra alignment-only step at the end of the epoch.
    PerEpoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
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
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub fusion: Fusion,
    pub alignment_schedule: AlignmentSchedule,
    pub training_mode: TrainingMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.001,
            margin: 0.2,
            beta: 100.0,
            negatives_per_positive: 4,
            dropout_rate: 0.5,
            embed_dim: 32,
            hidden_dim: 64,
            threshold: 0.5,
            seed: 1,
            optimizer: OptimizerKind::Adam,
            fusion: Fusion::Concat,
            alignment_schedule: AlignmentSchedule::PerBatch,
            training_mode: TrainingMode::Sampled,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::Config(format!("margin {} outside [0, 1)", self.margin)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta {} must be non-negative", self.beta)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }

    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            dropout_rate: self.dropout_rate,
            fusion: self.fusion,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Centralized,
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "feddmf")]
    FedDmf,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Centralized, Strategy::FedAvg, Strategy::FedDmf, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Centralized => "centralized",
            Strategy::FedAvg => "fedavg",
            Strategy::FedDmf => "feddmf",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}
