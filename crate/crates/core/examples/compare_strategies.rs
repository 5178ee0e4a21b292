//! Centralized DMF, FedAvg, FedDMF and random scoring on the same split.
//!
//! cargo run --release --example compare_strategies [ratings.csv]
//!
//! Without an argument a synthetic ratings table is used.

use feddmf::data::{binarize, load_movielens_csv, make_split, SplitSpec, SyntheticSpec};
use feddmf::federation::{evaluate, run_strategy, Phase, Strategy, TrainConfig};
use feddmf::metrics::MeanStd;

fn main() -> feddmf::Result<()> {
    let ratings = match std::env::args().nth(1) {
        Some(path) => load_movielens_csv(path)?,
        None => SyntheticSpec { users: 300, items: 400, ..Default::default() }.generate()?,
    };
    let dataset = binarize(&ratings)?;
    let split = make_split(&dataset, SplitSpec::new(0.5, 0.5, 0.5, 1))?;
    let cfg = TrainConfig { epochs: 10, ..Default::default() };

    println!("strategy      train F1         test F1");
    for strategy in Strategy::ALL {
        let started = std::time::Instant::now();
        let outcome = run_strategy(strategy, &dataset, &split, &cfg)?;
        let evals = evaluate(&outcome.trained, &dataset, &split, cfg.threshold, cfg.seed)?;
        let f1_of = |phase| {
            let v: Vec<f64> = evals.iter().filter(|e| e.phase == phase).map(|e| e.report.f1).collect();
            MeanStd::of(&v)
        };
        let (train, test) = (f1_of(Phase::Train)?, f1_of(Phase::Test)?);
        println!(
            "{:<12}  {:.3} +- {:.3}    {:.3} +- {:.3}   ({:.1}s)",
            strategy.name(),
            train.mean,
            train.std,
            test.mean,
            test.std,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
