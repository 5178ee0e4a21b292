#![allow(dead_code)]

use feddmf::data::{binarize, make_split, FederatedSplit, InteractionDataset, SplitSpec, SyntheticSpec};
use feddmf::federation::TrainConfig;
use feddmf::nn::OptimizerKind;

/// Small synthetic dataset with learnable structure.
pub fn synthetic(users: usize, items: usize, per_user: usize, seed: u64) -> InteractionDataset {
    let table = SyntheticSpec {
        users,
        items,
        mean_ratings_per_user: per_user,
        seed,
        ..Default::default()
    }
    .generate()
    .unwrap();
    binarize(&table).unwrap()
}

pub fn half_split(ds: &InteractionDataset, seed: u64) -> FederatedSplit {
    make_split(ds, SplitSpec::new(0.5, 0.5, 0.5, seed)).unwrap()
}

pub fn quick_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        embed_dim: 8,
        hidden_dim: 8,
        optimizer: OptimizerKind::Adam,
        learning_rate: 0.01,
        ..Default::default()
    }
}

/// Relative error with a small floor on the scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
