//! Scoring trained strategies on each client's blocks.
//!
//! `Train` scores a client's users against its own exclusive features, `Test`
//! against the other client's exclusive features. Common features appear in
//! neither. Every pair of a block is scored.

use std::fmt;

use crate::data::{test_block, train_eval_block, Block, FederatedSplit, InteractionDataset};
use crate::error::Result;
use crate::metrics::{confusion, f1, MetricsReport};
use crate::model::DmfModel;
use crate::nn::rng::streams;
use crate::nn::Rng;

use super::strategies::predict_cross_client;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a strategy leaves behind for scoring.
#[derive(Clone, Debug)]
pub enum Trained {
    /// One model over the global user and feature space.
    Global(DmfModel),
    /// One private model per client, user rows in the client's user order.
    PerClient(Vec<DmfModel>),
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClientEval {
    /// 0-based.
    pub client: usize,
    pub phase: Phase,
    pub report: MetricsReport,
}

/// `n` independent uniform scores in `[0, 1)`.
pub fn random_baseline(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.uniform()).collect()
}

fn score_block(trained: &Trained, client: usize, phase: Phase, block: &Block, rng: &mut Rng) -> Result<Vec<f64>> {
    match trained {
        Trained::Global(m) => m.score_grid(&block.users, &m.feature_embeddings.lookup(&block.features)?),
        Trained::PerClient(models) => {
            let local = &models[client];
            let rows: Vec<usize> = (0..block.users.len()).collect();
            match phase {
                Phase::Train => local.score_grid(&rows, &local.feature_embeddings.lookup(&block.features)?),
                Phase::Test => {
                    let peer = &models[FederatedSplit::other(client)];
                    predict_cross_client(local, peer, &rows, &block.features)
                }
            }
        }
        Trained::Random => Ok(random_baseline(block.users.len() * block.features.len(), rng)),
    }
}

/// Train and test reports for every client, ordered client-major, train first.
/// `seed` only matters for [`Trained::Random`].
pub fn evaluate(
    trained: &Trained,
    dataset: &InteractionDataset,
    split: &FederatedSplit,
    threshold: f64,
    seed: u64,
) -> Result<Vec<ClientEval>> {
    let mut rng = Rng::derive(seed, streams::RANDOM_BASELINE);
    let mut out = Vec::with_capacity(split.clients.len() * 2);
    for client in 0..split.clients.len() {
        for phase in [Phase::Train, Phase::Test] {
            let block = match phase {
                Phase::Train => train_eval_block(split, client),
                Phase::Test => test_block(split, client),
            };
            let scores = score_block(trained, client, phase, &block, &mut rng)?;
            let counts = confusion(&scores, &block.labels(dataset), threshold)?;
            out.push(ClientEval {
                client,
                phase,
                report: f1(counts),
            });
        }
    }
    Ok(out)
}
