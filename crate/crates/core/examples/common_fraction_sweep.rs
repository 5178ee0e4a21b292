//! Sweep the share of common features and write the usual result tables.
//!
//! cargo run --release --example common_fraction_sweep

use feddmf::data::SyntheticSpec;
use feddmf::experiment::{cmd_sweep, ExperimentConfig, SweepAxis};
use feddmf::federation::Strategy;

fn main() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = dir.path().join("ratings.csv");
    SyntheticSpec::default().generate().and_then(|t| t.write_csv(&csv)).expect("synthetic data");

    let config = ExperimentConfig {
        dataset: csv,
        output: dir.path().join("out"),
        strategies: vec![Strategy::FedDmf, Strategy::Random],
        seeds: vec![1, 2],
        epochs: 5,
        ..Default::default()
    };
    let values = [0.1, 0.3, 0.5];
    let summary = match cmd_sweep(&config, SweepAxis::CommonFraction, &values, 0) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };

    println!("common  strategy  phase  F1 mean  std");
    for row in summary {
        println!(
            "{:<7} {:<9} {:<6} {:.3}    {:.3}",
            row.common_fraction, row.strategy, row.phase, row.f1_mean, row.f1_std
        );
    }
    for entry in std::fs::read_dir(dir.path().join("out")).unwrap().flatten() {
        println!("wrote {}", entry.file_name().to_string_lossy());
    }
}
