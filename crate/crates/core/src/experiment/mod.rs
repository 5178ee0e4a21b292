//! Experiment driver: dataset preparation, single runs, sweeps and the files
//! they leave behind.
//!
//! Output directory layout:
//!
//! ```text
//! results.csv          one row per (strategy, seed, split point, client, phase)
//! summary.csv          mean / population std per (split point, strategy, phase)
//! timings.csv          wall-clock seconds per (strategy, seed, split point)
//! config_echo.toml     the effective configuration
//! audit/*.log          exchange log of every FedDMF run
//! checkpoints/*.ckpt   trained models, when `save_checkpoints = true`
//! ```
//!
//! `results.csv` and `summary.csv` are a pure function of the config and the
//! dataset file; timings live in their own file for that reason.

mod config;

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, SweepAxis};

use crate::data::{binarize, load_movielens_csv, make_split, InteractionDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::federation::{evaluate, run_strategy, Strategy, Trained, TrainConfig};
use crate::federation::ExchangeLog;
use crate::metrics::{MeanStd, MetricsReport};
use crate::model::DmfModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Split,
    Train,
    Evaluate,
    Audit,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Split => "split",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Audit => "audit",
            Stage::Write => "write",
        })
    }
}

/// An [`Error`] tagged with the pipeline stage it came from.
#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed{context}: {source}")]
pub struct StageError {
    pub stage: Stage,
    context: String,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn new(stage: Stage, source: Error) -> Self {
        StageError {
            stage,
            context: String::new(),
            source,
        }
    }

    fn with(stage: Stage, context: impl fmt::Display, source: Error) -> Self {
        StageError {
            stage,
            context: format!(" ({context})"),
            source,
        }
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|e| StageError::new(stage, e))
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub path: PathBuf,
    pub sha256: String,
    pub ratings: usize,
    pub users: usize,
    pub movies: usize,
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Validates a ratings CSV and writes `dataset_manifest.toml` into `out`.
pub fn cmd_prepare(csv: &Path, out: &Path) -> StageResult<DatasetManifest> {
    let table = load_movielens_csv(csv).at(Stage::Load)?;
    let counts = table.counts();
    let manifest = DatasetManifest {
        path: csv.to_path_buf(),
        sha256: sha256_file(csv).at(Stage::Load)?,
        ratings: counts.ratings,
        users: counts.users,
        movies: counts.movies,
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e)).at(Stage::Write)?;
    let path = out.join("dataset_manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string())).at(Stage::Write)?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e)).at(Stage::Write)?;
    Ok(manifest)
}

pub fn load_dataset(path: &Path) -> StageResult<InteractionDataset> {
    let table = load_movielens_csv(path).at(Stage::Load)?;
    binarize(&table).at(Stage::Load)
}

/// Writes the split manifest for every seed of `config` into `<output>/splits/`.
pub fn cmd_split(config: &ExperimentConfig) -> StageResult<Vec<PathBuf>> {
    config.validate().at(Stage::Config)?;
    let dataset = load_dataset(&config.dataset)?;
    let dir = config.output.join("splits");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e)).at(Stage::Write)?;
    let mut paths = Vec::new();
    for &seed in &config.seeds {
        let split = make_split(&dataset, config.split_spec(seed)).at(Stage::Split)?;
        let path = dir.join(format!("split_seed{seed}.toml"));
        split.to_manifest(&dataset).save(&path).at(Stage::Write)?;
        paths.push(path);
    }
    Ok(paths)
}

/// One row of `results.csv`. Column order is fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub common_fraction: f64,
    pub c1_feature_fraction: f64,
    pub c1_user_fraction: f64,
    /// 1-based.
    pub client: usize,
    pub phase: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub strategy: Strategy,
    pub seed: u64,
    pub common_fraction: f64,
    pub c1_feature_fraction: f64,
    pub c1_user_fraction: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub common_fraction: f64,
    pub c1_feature_fraction: f64,
    pub c1_user_fraction: f64,
    pub strategy: Strategy,
    pub phase: String,
    /// Rows aggregated: clients × seeds.
    pub runs: usize,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

/// Everything one `(strategy, seed, split point)` run produced.
#[derive(Clone, Debug)]
pub struct SingleRun {
    pub results: Vec<RunResult>,
    pub timing: RunTiming,
    pub log: Option<ExchangeLog>,
    pub trained: Trained,
}

impl SingleRun {
    /// File stem naming this run, e.g. `feddmf_seed1_cf0.5_ff0.5_uf0.5`.
    pub fn tag(&self) -> String {
        let t = &self.timing;
        format!(
            "{}_seed{}_cf{}_ff{}_uf{}",
            t.strategy, t.seed, t.common_fraction, t.c1_feature_fraction, t.c1_user_fraction
        )
    }
}

/// Splits, trains, audits and evaluates one strategy under one seed.
pub fn run_single(
    dataset: &InteractionDataset,
    spec: SplitSpec,
    strategy: Strategy,
    cfg: &TrainConfig,
) -> StageResult<SingleRun> {
    let ctx = format!("strategy {strategy}, seed {}", cfg.seed);
    let start = Instant::now();
    let split = make_split(dataset, spec).map_err(|e| StageError::with(Stage::Split, &ctx, e))?;
    let outcome = run_strategy(strategy, dataset, &split, cfg).map_err(|e| StageError::with(Stage::Train, &ctx, e))?;
    let log = match strategy {
        Strategy::FedDmf => {
            outcome
                .log
                .verify_feature_only(&split.common_features)
                .map_err(|e| StageError::with(Stage::Audit, &ctx, e))?;
            Some(outcome.log)
        }
        _ => None,
    };
    let evals = evaluate(&outcome.trained, dataset, &split, cfg.threshold, cfg.seed)
        .map_err(|e| StageError::with(Stage::Evaluate, &ctx, e))?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let results = evals
        .iter()
        .map(|ev| {
            let MetricsReport {
                precision,
                recall,
                f1,
                counts,
            } = ev.report;
            RunResult {
                strategy,
                seed: cfg.seed,
                common_fraction: spec.common_fraction,
                c1_feature_fraction: spec.client1_feature_fraction,
                c1_user_fraction: spec.client1_user_fraction,
                client: ev.client + 1,
                phase: ev.phase.name().to_string(),
                precision,
                recall,
                f1,
                tp: counts.tp,
                fp: counts.fp,
                fn_: counts.fn_,
                tn: counts.tn,
            }
        })
        .collect::<Vec<_>>();
    for r in &results {
        info!("{ctx}: client {} {} f1 {:.4}", r.client, r.phase, r.f1);
    }
    Ok(SingleRun {
        results,
        timing: RunTiming {
            strategy,
            seed: cfg.seed,
            common_fraction: spec.common_fraction,
            c1_feature_fraction: spec.client1_feature_fraction,
            c1_user_fraction: spec.client1_user_fraction,
            wall_seconds,
        },
        log,
        trained: outcome.trained,
    })
}

/// Runs every `(point, strategy, seed)` combination on up to `jobs` worker
/// threads (`0` = rayon's default). Output order is fixed by the inputs, not
/// by completion order.
pub fn run_grid(dataset: &InteractionDataset, points: &[ExperimentConfig], jobs: usize) -> StageResult<Vec<SingleRun>> {
    for p in points {
        p.validate().at(Stage::Config)?;
    }
    let mut tasks = Vec::new();
    for p in points {
        for &strategy in &p.strategies {
            for &seed in &p.seeds {
                tasks.push((p.split_spec(seed), strategy, p.train_config(seed)));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| StageError::new(Stage::Config, Error::Config(format!("thread pool: {e}"))))?;
    let mut runs: Vec<SingleRun> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(spec, strategy, cfg)| run_single(dataset, *spec, *strategy, cfg))
            .collect::<StageResult<Vec<_>>>()
    })?;
    runs.sort_by(|a, b| {
        let key = |r: &SingleRun| {
            let t = &r.timing;
            (t.common_fraction, t.c1_feature_fraction, t.c1_user_fraction, t.strategy, t.seed)
        };
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
            .then(ka.3.cmp(&kb.3))
            .then(ka.4.cmp(&kb.4))
    });
    Ok(runs)
}

/// Mean and population std per (split point, strategy, phase), in first-seen order.
pub fn summarize(results: &[RunResult]) -> Result<Vec<SummaryRow>> {
    let mut groups: Vec<(SummaryRow, Vec<&RunResult>)> = Vec::new();
    for r in results {
        let same = |s: &SummaryRow| {
            s.common_fraction == r.common_fraction
                && s.c1_feature_fraction == r.c1_feature_fraction
                && s.c1_user_fraction == r.c1_user_fraction
                && s.strategy == r.strategy
                && s.phase == r.phase
        };
        match groups.iter_mut().find(|(s, _)| same(s)) {
            Some((_, members)) => members.push(r),
            None => groups.push((
                SummaryRow {
                    common_fraction: r.common_fraction,
                    c1_feature_fraction: r.c1_feature_fraction,
                    c1_user_fraction: r.c1_user_fraction,
                    strategy: r.strategy,
                    phase: r.phase.clone(),
                    runs: 0,
                    precision_mean: 0.0,
                    precision_std: 0.0,
                    recall_mean: 0.0,
                    recall_std: 0.0,
                    f1_mean: 0.0,
                    f1_std: 0.0,
                },
                vec![r],
            )),
        }
    }
    groups
        .into_iter()
        .map(|(mut s, members)| {
            let stat = |f: fn(&RunResult) -> f64| MeanStd::of(&members.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (p, r, f) = (stat(|r| r.precision)?, stat(|r| r.recall)?, stat(|r| r.f1)?);
            s.runs = members.len();
            (s.precision_mean, s.precision_std) = (p.mean, p.std);
            (s.recall_mean, s.recall_std) = (r.mean, r.std);
            (s.f1_mean, s.f1_std) = (f.mean, f.std);
            Ok(s)
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header of `config_echo.toml`, followed by the effective config.
#[derive(Serialize)]
struct Echo<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_axis: Option<SweepAxis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_values: Option<&'a [f64]>,
    config: &'a ExperimentConfig,
}

/// Writes the output directory for a finished set of runs.
pub fn write_outputs(
    config: &ExperimentConfig,
    runs: &[SingleRun],
    sweep: Option<(SweepAxis, &[f64])>,
) -> StageResult<Vec<SummaryRow>> {
    let out = &config.output;
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| Error::io(p, e)).at(Stage::Write);
    mkdir(out)?;
    let results: Vec<RunResult> = runs.iter().flat_map(|r| r.results.iter().cloned()).collect();
    let timings: Vec<RunTiming> = runs.iter().map(|r| r.timing.clone()).collect();
    let summary = summarize(&results).at(Stage::Write)?;
    write_csv(&out.join("results.csv"), &results).at(Stage::Write)?;
    write_csv(&out.join("summary.csv"), &summary).at(Stage::Write)?;
    write_csv(&out.join("timings.csv"), &timings).at(Stage::Write)?;

    let echo = Echo {
        command: if sweep.is_some() { "sweep" } else { "run" },
        sweep_axis: sweep.map(|s| s.0),
        sweep_values: sweep.map(|s| s.1),
        config,
    };
    let echo_path = out.join("config_echo.toml");
    let text = toml::to_string(&echo).map_err(|e| Error::Config(e.to_string())).at(Stage::Write)?;
    fs::write(&echo_path, text).map_err(|e| Error::io(&echo_path, e)).at(Stage::Write)?;

    let audits: Vec<&SingleRun> = runs.iter().filter(|r| r.log.is_some()).collect();
    if !audits.is_empty() {
        let dir = out.join("audit");
        mkdir(&dir)?;
        for r in audits {
            let log = r.log.as_ref().expect("filtered");
            log.save(&dir.join(format!("{}.log", r.tag()))).at(Stage::Write)?;
        }
    }
    if config.save_checkpoints {
        let dir = out.join("checkpoints");
        mkdir(&dir)?;
        for r in runs {
            let save = |m: &DmfModel, name: String| m.save(&dir.join(name)).at(Stage::Write);
            match &r.trained {
                Trained::Global(m) => save(m, format!("{}.ckpt", r.tag()))?,
                Trained::PerClient(ms) => {
                    for (c, m) in ms.iter().enumerate() {
                        save(m, format!("{}_client{}.ckpt", r.tag(), c + 1))?;
                    }
                }
                Trained::Random => {}
            }
        }
    }
    Ok(summary)
}

/// Trains and evaluates every strategy × seed of `config`, then writes the
/// output directory.
pub fn cmd_run(config: &ExperimentConfig, jobs: usize) -> StageResult<Vec<SummaryRow>> {
    config.validate().at(Stage::Config)?;
    let dataset = load_dataset(&config.dataset)?;
    let runs = run_grid(&dataset, std::slice::from_ref(config), jobs)?;
    write_outputs(config, &runs, None)
}

/// Like [`cmd_run`] once per value of `axis`, all into one output directory.
pub fn cmd_sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64], jobs: usize) -> StageResult<Vec<SummaryRow>> {
    config.validate().at(Stage::Config)?;
    axis.validate_values(values).at(Stage::Config)?;
    let points: Vec<ExperimentConfig> = values.iter().map(|&v| axis.apply(config, v)).collect();
    for p in &points {
        p.validate().at(Stage::Config)?;
    }
    let dataset = load_dataset(&config.dataset)?;
    let runs = run_grid(&dataset, &points, jobs)?;
    write_outputs(config, &runs, Some((axis, values)))
}
