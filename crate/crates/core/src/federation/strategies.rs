use log::{debug, warn};

use crate::data::{FederatedSplit, InteractionDataset, TrainBlock};
use crate::error::{Error, Result};
use crate::federation::audit::{ExchangeLog, ExchangeRecord, Party, SharedEmbeddings};
use crate::federation::trainer::{Alignment, EpochStats, LocalTrainer, UserRows};
use crate::federation::{Strategy, TrainConfig};
use crate::model::DmfModel;
use crate::nn::rng::streams;
use crate::nn::matrix::{dot, norm};
use crate::nn::{Matrix, Rng};

use super::evaluate::Trained;

#[derive(Clone, Debug, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    /// One entry per trainer (a single one for centralized training).
    pub clients: Vec<EpochStats>,
    /// FedDMF only: mean cosine between the clients' common-feature rows
    /// at the end of the round.
    pub common_cosine: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub trained: Trained,
    pub rounds: Vec<RoundStats>,
    pub log: ExchangeLog,
}

fn trainer_for(client: usize, block: TrainBlock, rows: UserRows, cfg: &TrainConfig) -> LocalTrainer {
    LocalTrainer::new(
        client,
        block,
        rows,
        cfg,
        Rng::derive(cfg.seed, streams::sampling(client)),
        Rng::derive(cfg.seed, streams::dropout(client)),
    )
}

fn global_model(dataset: &InteractionDataset, cfg: &TrainConfig) -> Result<DmfModel> {
    let mut rng = Rng::derive(cfg.seed, streams::init(0));
    DmfModel::new(dataset.num_users(), dataset.num_features(), &cfg.model_shape(), &mut rng)
}

/// One model over the global index space trained on the union of the
/// clients' training blocks.
pub fn train_centralized(
    dataset: &InteractionDataset,
    split: &FederatedSplit,
    cfg: &TrainConfig,
) -> Result<(DmfModel, Vec<RoundStats>)> {
    cfg.validate()?;
    let mut model = global_model(dataset, cfg)?;
    let mut trainer = trainer_for(0, TrainBlock::union_of_clients(split, dataset), UserRows::Identity, cfg);
    let mut rounds = Vec::with_capacity(cfg.epochs);
    for round in 0..cfg.epochs {
        let stats = trainer.run_epoch(&mut model, dataset, cfg, None)?;
        debug!("centralized epoch {round}: mse {:.5}", stats.mse);
        rounds.push(RoundStats {
            round,
            clients: vec![stats],
            common_cosine: None,
        });
    }
    Ok((model, rounds))
}

/// Runs `cfg.epochs` FedAvg rounds starting from `global`: every trainer
/// trains a copy for one epoch, then the copies are averaged.
pub fn fedavg_rounds(
    global: &mut DmfModel,
    trainers: &mut [LocalTrainer],
    dataset: &InteractionDataset,
    cfg: &TrainConfig,
    log: &mut ExchangeLog,
) -> Result<Vec<RoundStats>> {
    let mut rounds = Vec::with_capacity(cfg.epochs);
    for round in 0..cfg.epochs {
        let mut locals = Vec::with_capacity(trainers.len());
        let mut stats = Vec::with_capacity(trainers.len());
        for t in trainers.iter_mut() {
            let mut local = global.clone();
            stats.push(t.run_epoch(&mut local, dataset, cfg, None)?);
            log.push(ExchangeRecord::full_model(round, Party::Client(t.client), Party::Server, &local));
            locals.push(local);
        }
        let refs: Vec<&DmfModel> = locals.iter().collect();
        *global = DmfModel::average(&refs)?;
        for t in trainers.iter() {
            log.push(ExchangeRecord::full_model(round, Party::Server, Party::Client(t.client), global));
        }
        rounds.push(RoundStats {
            round,
            clients: stats,
            common_cosine: None,
        });
    }
    Ok(rounds)
}

pub fn train_fedavg(
    dataset: &InteractionDataset,
    split: &FederatedSplit,
    cfg: &TrainConfig,
) -> Result<(DmfModel, Vec<RoundStats>, ExchangeLog)> {
    cfg.validate()?;
    let mut global = global_model(dataset, cfg)?;
    let mut trainers: Vec<LocalTrainer> = (0..split.clients.len())
        .map(|c| trainer_for(c, TrainBlock::for_client(split, c, dataset), UserRows::Identity, cfg))
        .collect();
    let mut log = ExchangeLog::default();
    let rounds = fedavg_rounds(&mut global, &mut trainers, dataset, cfg, &mut log)?;
    Ok((global, rounds, log))
}

/// Per-client private models plus the state that persists between rounds.
#[derive(Clone, Debug)]
pub struct FedDmf {
    pub models: Vec<DmfModel>,
    pub trainers: Vec<LocalTrainer>,
    pub common: Vec<usize>,
    pub log: ExchangeLog,
    round: usize,
}

impl FedDmf {
    /// Client `c` gets a model over its own users and the global feature space,
    /// initialised from its own stream.
    pub fn new(dataset: &InteractionDataset, split: &FederatedSplit, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut models = Vec::new();
        let mut trainers = Vec::new();
        for (c, part) in split.clients.iter().enumerate() {
            let mut rng = Rng::derive(cfg.seed, streams::init(c));
            models.push(DmfModel::new(part.users.len(), dataset.num_features(), &cfg.model_shape(), &mut rng)?);
            let rows = UserRows::subset(&part.users, dataset.num_users());
            trainers.push(trainer_for(c, TrainBlock::for_client(split, c, dataset), rows, cfg));
        }
        if split.common_features.is_empty() && cfg.beta > 0.0 {
            warn!("no common features: FedDMF clients train without alignment");
        }
        Ok(FedDmf {
            models,
            trainers,
            common: split.common_features.clone(),
            log: ExchangeLog::default(),
            round: 0,
        })
    }

    /// What client `c` sends: a copy of its common-feature embedding rows.
    pub fn snapshot(&self, client: usize) -> Result<SharedEmbeddings> {
        Ok(SharedEmbeddings {
            feature_ids: self.common.clone(),
            rows: self.models[client].feature_embeddings.lookup(&self.common)?,
        })
    }

    /// Exchange snapshots, then one aligned local epoch per client.
    pub fn round(&mut self, dataset: &InteractionDataset, cfg: &TrainConfig) -> Result<RoundStats> {
        let round = self.round;
        let exchange = !self.common.is_empty() && cfg.beta > 0.0;
        let mut received: Vec<Option<SharedEmbeddings>> = vec![None; self.models.len()];
        if exchange {
            let snaps = (0..self.models.len()).map(|c| self.snapshot(c)).collect::<Result<Vec<_>>>()?;
            for (c, snap) in snaps.into_iter().enumerate() {
                let to = FederatedSplit::other(c);
                self.log
                    .push(ExchangeRecord::shared_embeddings(round, Party::Client(c), Party::Client(to), &snap));
                received[to] = Some(snap);
            }
        }
        let mut clients = Vec::with_capacity(self.models.len());
        for ((model, trainer), peer) in self.models.iter_mut().zip(&mut self.trainers).zip(&received) {
            let alignment = peer.as_ref().map(|p| Alignment {
                features: &p.feature_ids,
                peer: &p.rows,
                margin: cfg.margin,
                beta: cfg.beta,
            });
            clients.push(trainer.run_epoch(model, dataset, cfg, alignment)?);
        }
        self.round += 1;
        let common_cosine = self.common_cosine().ok();
        debug!("feddmf round {round}: {clients:?} cosine {common_cosine:?}");
        Ok(RoundStats {
            round,
            clients,
            common_cosine,
        })
    }

    /// Mean cosine similarity between the two clients' common-feature rows.
    pub fn common_cosine(&self) -> Result<f64> {
        if self.common.is_empty() {
            return Err(Error::Config("no common features".into()));
        }
        let a = self.models[0].feature_embeddings.lookup(&self.common)?;
        let b = self.models[1].feature_embeddings.lookup(&self.common)?;
        Ok(mean_row_cosine(&a, &b))
    }
}

pub(crate) fn mean_row_cosine(a: &Matrix, b: &Matrix) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        let (x, y) = (a.row(i), b.row(i));
        total += dot(x, y) / (norm(x) * norm(y));
    }
    total / a.rows() as f64
}

pub fn train_feddmf(
    dataset: &InteractionDataset,
    split: &FederatedSplit,
    cfg: &TrainConfig,
) -> Result<(Vec<DmfModel>, Vec<RoundStats>, ExchangeLog)> {
    let mut fed = FedDmf::new(dataset, split, cfg)?;
    let rounds = (0..cfg.epochs).map(|_| fed.round(dataset, cfg)).collect::<Result<Vec<_>>>()?;
    Ok((fed.models, rounds, fed.log))
}

/// Each client trains its own private model with no exchange at all.
pub fn train_independent(
    dataset: &InteractionDataset,
    split: &FederatedSplit,
    cfg: &TrainConfig,
) -> Result<Vec<DmfModel>> {
    let mut fed = FedDmf::new(dataset, split, cfg)?;
    for _ in 0..cfg.epochs {
        for (model, trainer) in fed.models.iter_mut().zip(&mut fed.trainers) {
            trainer.run_epoch(model, dataset, cfg, None)?;
        }
    }
    Ok(fed.models)
}

/// Scores `local_users × features` (row-major by user) with the local model,
/// taking the feature embeddings from the peer's table.
pub fn predict_cross_client(
    local: &DmfModel,
    peer: &DmfModel,
    local_user_rows: &[usize],
    features: &[usize],
) -> Result<Vec<f64>> {
    let foreign = peer.feature_embeddings.lookup(features)?;
    local.score_grid(local_user_rows, &foreign)
}

pub fn run_strategy(
    strategy: Strategy,
    dataset: &InteractionDataset,
    split: &FederatedSplit,
    cfg: &TrainConfig,
) -> Result<StrategyOutcome> {
    cfg.validate()?;
    let (trained, rounds, log) = match strategy {
        Strategy::Centralized => {
            let (m, r) = train_centralized(dataset, split, cfg)?;
            (Trained::Global(m), r, ExchangeLog::default())
        }
        Strategy::FedAvg => {
            let (m, r, log) = train_fedavg(dataset, split, cfg)?;
            (Trained::Global(m), r, log)
        }
        Strategy::FedDmf => {
            let (ms, r, log) = train_feddmf(dataset, split, cfg)?;
            (Trained::PerClient(ms), r, log)
        }
        Strategy::Random => (Trained::Random, Vec::new(), ExchangeLog::default()),
    };
    Ok(StrategyOutcome {
        strategy,
        trained,
        rounds,
        log,
    })
}
