//! Training epochs with negative sampling, and evaluation blocks.

use serde::{Deserialize, Serialize};

use crate::data::interactions::InteractionDataset;
use crate::data::split::FederatedSplit;
use crate::error::{Error, Result};
use crate::nn::Rng;

/// How zero-labelled pairs enter an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingMode {
    /// A fixed number of uniform negatives per positive, redrawn every epoch.
    #[default]
    Sampled,
    /// Every pair of the block, positive or not, once per epoch.
    FullBlock,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub users: Vec<usize>,
    pub features: Vec<usize>,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Rectangle `users × features` of global indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub users: Vec<usize>,
    pub features: Vec<usize>,
}

impl Block {
    pub fn area(&self) -> u64 {
        self.users.len() as u64 * self.features.len() as u64
    }

    /// Row-major `(user, feature)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.users.iter().flat_map(move |&u| self.features.iter().map(move |&f| (u, f)))
    }

    /// Ground-truth labels in [`Block::pairs`] order.
    pub fn labels(&self, dataset: &InteractionDataset) -> Vec<bool> {
        self.pairs().map(|(u, f)| dataset.is_positive(u, f)).collect()
    }

    pub fn positive_count(&self, dataset: &InteractionDataset) -> u64 {
        let member = membership(&self.features, dataset.num_features());
        self.users
            .iter()
            .map(|&u| dataset.positives_of(u).iter().filter(|&&f| member[f]).count() as u64)
            .sum()
    }
}

fn membership(items: &[usize], n: usize) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in items {
        m[i] = true;
    }
    m
}

/// The pairs one trainer may see: a union of disjoint rectangles.
#[derive(Clone, Debug)]
pub struct TrainBlock {
    rects: Vec<Block>,
    /// Positives inside the block, in deterministic order.
    positives: Vec<(usize, usize)>,
    cumulative_area: Vec<u64>,
}

impl TrainBlock {
    /// Rectangles must not overlap.
    pub fn new(rects: Vec<Block>, dataset: &InteractionDataset) -> Self {
        let mut positives = Vec::new();
        let mut cumulative_area = Vec::with_capacity(rects.len());
        let mut acc = 0;
        for rect in &rects {
            let member = membership(&rect.features, dataset.num_features());
            for &u in &rect.users {
                positives.extend(dataset.positives_of(u).iter().filter(|&&f| member[f]).map(|&f| (u, f)));
            }
            acc += rect.area();
            cumulative_area.push(acc);
        }
        TrainBlock {
            rects,
            positives,
            cumulative_area,
        }
    }

    /// Client `client`'s block: its users × (its exclusive ∪ common features).
    pub fn for_client(split: &FederatedSplit, client: usize, dataset: &InteractionDataset) -> Self {
        let rect = Block {
            users: split.clients[client].users.clone(),
            features: split.train_features(client),
        };
        TrainBlock::new(vec![rect], dataset)
    }

    /// Union of every client's block, as seen by a centralized trainer.
    pub fn union_of_clients(split: &FederatedSplit, dataset: &InteractionDataset) -> Self {
        let rects = (0..split.clients.len())
            .map(|c| Block {
                users: split.clients[c].users.clone(),
                features: split.train_features(c),
            })
            .collect();
        TrainBlock::new(rects, dataset)
    }

    pub fn rects(&self) -> &[Block] {
        &self.rects
    }

    pub fn positives(&self) -> &[(usize, usize)] {
        &self.positives
    }

    pub fn area(&self) -> u64 {
        self.cumulative_area.last().copied().unwrap_or(0)
    }

    pub fn contains(&self, u: usize, f: usize) -> bool {
        self.rects
            .iter()
            .any(|r| r.users.binary_search(&u).is_ok() && r.features.binary_search(&f).is_ok())
    }

    fn draw_negative(&self, dataset: &InteractionDataset, rng: &mut Rng) -> (usize, usize) {
        loop {
            let t = rng.below(self.area() as usize) as u64;
            let k = self.cumulative_area.partition_point(|&c| c <= t);
            let rect = &self.rects[k];
            let u = rect.users[rng.below(rect.users.len())];
            let f = rect.features[rng.below(rect.features.len())];
            if !dataset.is_positive(u, f) {
                return (u, f);
            }
        }
    }

    /// One shuffled epoch cut into batches.
    ///
    /// `Sampled`: every positive once plus `negatives_per_positive` uniform
    /// non-positive pairs of the block per positive. `FullBlock`: every pair.
    pub fn epoch(
        &self,
        dataset: &InteractionDataset,
        batch_size: usize,
        negatives_per_positive: usize,
        mode: TrainingMode,
        rng: &mut Rng,
        client: usize,
    ) -> Result<Vec<Batch>> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.positives.is_empty() {
            return Err(Error::EmptyClient { client: client + 1 });
        }
        let mut examples: Vec<(usize, usize, f64)> = match mode {
            TrainingMode::Sampled => {
                let n_pos = self.positives.len() as u64;
                if negatives_per_positive > 0 && self.area() == n_pos {
                    return Err(Error::Config(format!(
                        "client {} block has no negative pairs to sample",
                        client + 1
                    )));
                }
                let mut ex = Vec::with_capacity(self.positives.len() * (1 + negatives_per_positive));
                for &(u, f) in &self.positives {
                    ex.push((u, f, 1.0));
                    for _ in 0..negatives_per_positive {
                        let (nu, nf) = self.draw_negative(dataset, rng);
                        ex.push((nu, nf, 0.0));
                    }
                }
                ex
            }
            TrainingMode::FullBlock => self
                .rects
                .iter()
                .flat_map(|r| r.pairs())
                .map(|(u, f)| (u, f, if dataset.is_positive(u, f) { 1.0 } else { 0.0 }))
                .collect(),
        };
        rng.shuffle(&mut examples);
        Ok(examples
            .chunks(batch_size)
            .map(|chunk| Batch {
                users: chunk.iter().map(|e| e.0).collect(),
                features: chunk.iter().map(|e| e.1).collect(),
                labels: chunk.iter().map(|e| e.2).collect(),
            })
            .collect())
    }
}

/// One epoch of batches for `client` (0-based) with sampled negatives.
pub fn sample_batches(
    split: &FederatedSplit,
    client: usize,
    dataset: &InteractionDataset,
    batch_size: usize,
    negatives_per_positive: usize,
    rng: &mut Rng,
) -> Result<Vec<Batch>> {
    TrainBlock::for_client(split, client, dataset).epoch(
        dataset,
        batch_size,
        negatives_per_positive,
        TrainingMode::Sampled,
        rng,
        client,
    )
}

/// Client's cross-client test block: its users × the other client's exclusive features.
pub fn test_block(split: &FederatedSplit, client: usize) -> Block {
    Block {
        users: split.clients[client].users.clone(),
        features: split.test_features(client).to_vec(),
    }
}

/// Client's own-feature evaluation block: its users × its exclusive features.
/// Common features are left out, as in the test block.
pub fn train_eval_block(split: &FederatedSplit, client: usize) -> Block {
    Block {
        users: split.clients[client].users.clone(),
        features: split.clients[client].exclusive_features.clone(),
    }
}

/// Every pair of the client's test block with its ground-truth label.
pub fn test_block_pairs(
    split: &FederatedSplit,
    client: usize,
    dataset: &InteractionDataset,
) -> (Vec<(usize, usize)>, Vec<bool>) {
    let block = test_block(split, client);
    let labels = block.labels(dataset);
    (block.pairs().collect(), labels)
}
