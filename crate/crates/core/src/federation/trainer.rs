//! One client's local epoch.

use crate::data::{InteractionDataset, TrainBlock};
use crate::error::{Error, Result};
use crate::federation::{AlignmentSchedule, TrainConfig};
use crate::model::DmfModel;
use crate::nn::{cosine_margin_loss, mse_loss, Matrix, Optimizer, Rng};

/// Maps global user indices to rows of a model's user table.
#[derive(Clone, Debug, PartialEq)]
pub enum UserRows {
    /// Model spans the global user space.
    Identity,
    /// Model holds only these users; row `k` belongs to `users[k]`.
    Subset { rows: Vec<usize> },
}

const ABSENT: usize = usize::MAX;

impl UserRows {
    /// Row lookup for a model that holds exactly `users` (in that order).
    pub fn subset(users: &[usize], num_users: usize) -> Self {
        let mut rows = vec![ABSENT; num_users];
        for (k, &u) in users.iter().enumerate() {
            rows[u] = k;
        }
        UserRows::Subset { rows }
    }

    pub fn row(&self, user: usize) -> Result<usize> {
        match self {
            UserRows::Identity => Ok(user),
            UserRows::Subset { rows } => match rows.get(user) {
                Some(&r) if r != ABSENT => Ok(r),
                _ => Err(Error::Index {
                    what: "client user",
                    value: user,
                    len: rows.len(),
                }),
            },
        }
    }

    pub fn rows_of(&self, users: &[usize]) -> Result<Vec<usize>> {
        users.iter().map(|&u| self.row(u)).collect()
    }
}

/// Frozen peer view used by the embedding-alignment penalty.
#[derive(Clone, Copy, Debug)]
pub struct Alignment<'a> {
    /// Global indices of the shared features, row-aligned with `peer`.
    pub features: &'a [usize],
    pub peer: &'a Matrix,
    pub margin: f64,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochStats {
    /// Mean batch MSE.
    pub mse: f64,
    /// Mean alignment loss over the steps that applied it.
    pub alignment: f64,
    pub batches: usize,
}

/// State that persists across one client's epochs: its block, its random
/// streams and its optimizer.
#[derive(Clone, Debug)]
pub struct LocalTrainer {
    pub client: usize,
    block: TrainBlock,
    user_rows: UserRows,
    sample_rng: Rng,
    dropout_rng: Rng,
    optimizer: Optimizer,
}

impl LocalTrainer {
    pub fn new(client: usize, block: TrainBlock, user_rows: UserRows, cfg: &TrainConfig, sample_rng: Rng, dropout_rng: Rng) -> Self {
        LocalTrainer {
            client,
            block,
            user_rows,
            sample_rng,
            dropout_rng,
            optimizer: Optimizer::new(cfg.optimizer, cfg.learning_rate),
        }
    }

    pub fn block(&self) -> &TrainBlock {
        &self.block
    }

    pub fn user_rows(&self) -> &UserRows {
        &self.user_rows
    }

    fn align(&mut self, model: &mut DmfModel, alignment: &Alignment<'_>) -> Result<f64> {
        let local = model.feature_embeddings.lookup(alignment.features)?;
        let (loss, grad) = cosine_margin_loss(&local, alignment.peer, alignment.margin, alignment.beta)?;
        model.feature_embeddings.accumulate_rows(alignment.features, &grad);
        Ok(loss)
    }

    /// Runs one epoch over the block. With `alignment`, the cosine-margin
    /// penalty against the frozen peer rows joins the MSE objective.
    pub fn run_epoch(
        &mut self,
        model: &mut DmfModel,
        dataset: &InteractionDataset,
        cfg: &TrainConfig,
        alignment: Option<Alignment<'_>>,
    ) -> Result<EpochStats> {
        let alignment = alignment.filter(|a| a.beta > 0.0 && !a.features.is_empty());
        let batches = self.block.epoch(
            dataset,
            cfg.batch_size,
            cfg.negatives_per_positive,
            cfg.training_mode,
            &mut self.sample_rng,
            self.client,
        )?;
        let mut stats = EpochStats::default();
        let mut align_steps = 0usize;
        for batch in &batches {
            let rows = self.user_rows.rows_of(&batch.users)?;
            let (pred, mut cache) = model.forward(&rows, &batch.features, true, &mut self.dropout_rng)?;
            let (loss, grad) = mse_loss(&pred, &Matrix::column(&batch.labels))?;
            model.backward(&mut cache, &grad)?;
            stats.mse += loss;
            if let (Some(a), AlignmentSchedule::PerBatch) = (&alignment, cfg.alignment_schedule) {
                stats.alignment += self.align(model, a)?;
                align_steps += 1;
            }
            self.optimizer.step(model)?;
        }
        if let (Some(a), AlignmentSchedule::PerEpoch) = (&alignment, cfg.alignment_schedule) {
            stats.alignment += self.align(model, a)?;
            align_steps += 1;
            self.optimizer.step(model)?;
        }
        stats.batches = batches.len();
        stats.mse /= batches.len().max(1) as f64;
        stats.alignment /= align_steps.max(1) as f64;
        Ok(stats)
    }
}
