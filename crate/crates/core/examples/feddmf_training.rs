//! FedDMF round by round: the clients swap only their common-feature
//! embeddings, and those rows drift into alignment.
//!
//! cargo run --release --example feddmf_training

use feddmf::data::{binarize, make_split, SplitSpec, SyntheticSpec};
use feddmf::federation::{evaluate, FedDmf, Phase, TrainConfig, Trained};

fn main() -> feddmf::Result<()> {
    let dataset = binarize(&SyntheticSpec::default().generate()?)?;
    let split = make_split(&dataset, SplitSpec::new(0.5, 0.5, 0.5, 1))?;
    let cfg = TrainConfig { epochs: 10, ..Default::default() };

    let mut fed = FedDmf::new(&dataset, &split, &cfg)?;
    println!("round  mse(c1)  mse(c2)  align(c1)  cosine");
    println!("init   -        -        -          {:.3}", fed.common_cosine()?);
    for _ in 0..cfg.epochs {
        let r = fed.round(&dataset, &cfg)?;
        println!(
            "{:<6} {:.4}   {:.4}   {:<10.3} {:.3}",
            r.round,
            r.clients[0].mse,
            r.clients[1].mse,
            r.clients[0].alignment,
            r.common_cosine.unwrap_or(f64::NAN)
        );
    }

    fed.log.verify_feature_only(&split.common_features)?;
    println!("\nexchange log ({} transfers), first two:", fed.log.len());
    for line in fed.log.to_text().lines().take(2) {
        println!("  {line}");
    }

    let evals = evaluate(&Trained::PerClient(fed.models), &dataset, &split, cfg.threshold, cfg.seed)?;
    for e in evals {
        let what = match e.phase {
            Phase::Train => "own features ",
            Phase::Test => "peer features",
        };
        println!("client {} {what}: F1 {:.3}", e.client + 1, e.report.f1);
    }
    Ok(())
}
