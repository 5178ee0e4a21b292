use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use feddmf::experiment::{cmd_prepare, cmd_run, cmd_split, cmd_sweep, ExperimentConfig, Stage, StageError, SummaryRow, SweepAxis};

#[derive(Parser)]
#[command(name = "feddmf", version, about = "Federated deep matrix factorization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOpts {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Comma-separated seeds (overrides `seeds` in the config).
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a ratings CSV and write its manifest.
    Prepare {
        csv: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Write the split manifest for each seed.
    Split(RunOpts),
    /// Train and evaluate every configured strategy and seed.
    Run(RunOpts),
    /// Repeat `run` over values of one split fraction.
    Sweep {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', default_values_t = SweepAxis::DEFAULT_VALUES)]
        values: Vec<f64>,
    },
}

fn load(opts: &RunOpts) -> Result<ExperimentConfig, StageError> {
    let mut cfg = ExperimentConfig::load(&opts.config).map_err(|e| StageError::new(Stage::Config, e))?;
    if let Some(out) = &opts.out {
        cfg.output = out.clone();
    }
    if let Some(seeds) = &opts.seed_list {
        cfg.seeds = seeds.clone();
    }
    Ok(cfg)
}

fn print_summary(rows: &[SummaryRow]) {
    println!("common  c1_feat  c1_user  strategy     phase  runs  f1_mean  f1_std");
    for r in rows {
        println!(
            "{:<7} {:<8} {:<8} {:<12} {:<6} {:<5} {:.4}   {:.4}",
            r.common_fraction, r.c1_feature_fraction, r.c1_user_fraction, r.strategy, r.phase, r.runs, r.f1_mean, r.f1_std
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare { csv, out } => cmd_prepare(&csv, &out).map(|m| {
            println!("ratings {}  users {}  movies {}  sha256 {}", m.ratings, m.users, m.movies, m.sha256);
        }),
        Command::Split(opts) => load(&opts).and_then(|cfg| cmd_split(&cfg)).map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
        }),
        Command::Run(opts) => load(&opts).and_then(|cfg| cmd_run(&cfg, opts.jobs)).map(|s| print_summary(&s)),
        Command::Sweep { opts, axis, values } => load(&opts)
            .and_then(|cfg| cmd_sweep(&cfg, axis, &values, opts.jobs))
            .map(|s| print_summary(&s)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
