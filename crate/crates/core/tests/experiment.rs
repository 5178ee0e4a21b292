use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use feddmf::data::SyntheticSpec;
use feddmf::experiment::{cmd_prepare, cmd_run, cmd_sweep, ExperimentConfig, RunResult, Stage, SweepAxis};
use feddmf::federation::Strategy;
use feddmf::Error;

fn synthetic_csv(dir: &Path) -> PathBuf {
    let path = dir.join("ratings.csv");
    SyntheticSpec { users: 60, items: 90, mean_ratings_per_user: 15, ..Default::default() }
        .generate()
        .unwrap()
        .write_csv(&path)
        .unwrap();
    path
}

fn small_config(dir: &Path, out: &str) -> ExperimentConfig {
    ExperimentConfig {
        dataset: synthetic_csv(dir),
        output: dir.join(out),
        seeds: vec![1, 2],
        epochs: 2,
        embed_dim: 8,
        hidden_dim: 8,
        ..Default::default()
    }
}

fn read_results(path: &Path) -> Vec<RunResult> {
    csv::Reader::from_path(path).unwrap().deserialize().map(|r| r.unwrap()).collect()
}

#[test]
fn prepare_counts_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    fs::write(
        &csv,
        "userId,movieId,rating,timestamp\n1,10,4.0,1\n1,11,3.5,2\n2,10,5.0,3\n3,12,1.0,4\n3,10,2.0,5\n",
    )
    .unwrap();
    let m = cmd_prepare(&csv, &dir.path().join("out")).unwrap();
    assert_eq!((m.ratings, m.users, m.movies), (5, 3, 3));
    assert_eq!(m.sha256.len(), 64);
    assert!(dir.path().join("out/dataset_manifest.toml").exists());
}

#[test]
fn prepare_missing_header_is_line_one() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    fs::write(&csv, "1,10,4.0,1\n").unwrap();
    let err = cmd_prepare(&csv, dir.path()).unwrap_err();
    assert_eq!(err.stage, Stage::Load);
    assert!(matches!(err.source, Error::Parse { line: 1, .. }), "{err}");
}

#[test]
fn random_run_writes_rows_and_no_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        strategies: vec![Strategy::Random],
        save_checkpoints: true,
        ..small_config(dir.path(), "out")
    };
    cmd_run(&cfg, 1).unwrap();
    let rows = read_results(&cfg.output.join("results.csv"));
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.f1) && r.strategy == Strategy::Random));
    let ckpts = cfg.output.join("checkpoints");
    assert!(!ckpts.exists() || fs::read_dir(&ckpts).unwrap().next().is_none());
    assert!(!cfg.output.join("audit").exists());
}

#[test]
fn same_config_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_config(dir.path(), "a");
    let b = ExperimentConfig { output: dir.path().join("b"), ..a.clone() };
    cmd_run(&a, 1).unwrap();
    cmd_run(&b, 2).unwrap();
    for f in ["results.csv", "summary.csv"] {
        assert_eq!(fs::read(a.output.join(f)).unwrap(), fs::read(b.output.join(f)).unwrap(), "{f}");
    }
    let header = fs::read_to_string(a.output.join("results.csv")).unwrap();
    assert!(header.starts_with(
        "strategy,seed,common_fraction,c1_feature_fraction,c1_user_fraction,client,phase,precision,recall,f1,tp,fp,fn,tn\n"
    ));
    let rows = read_results(&a.output.join("results.csv"));
    assert_eq!(rows.len(), 4 * 2 * 2 * 2);
    assert_eq!(fs::read_dir(a.output.join("audit")).unwrap().count(), 2);
    let echo: toml::Table = toml::from_str(&fs::read_to_string(a.output.join("config_echo.toml")).unwrap()).unwrap();
    assert_eq!(echo["command"].as_str(), Some("run"));
}

#[test]
fn checkpoints_written_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        strategies: vec![Strategy::FedDmf, Strategy::Centralized],
        seeds: vec![1],
        save_checkpoints: true,
        ..small_config(dir.path(), "out")
    };
    cmd_run(&cfg, 1).unwrap();
    let mut names: Vec<String> = fs::read_dir(cfg.output.join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "centralized_seed1_cf0.5_ff0.5_uf0.5.ckpt",
            "feddmf_seed1_cf0.5_ff0.5_uf0.5_client1.ckpt",
            "feddmf_seed1_cf0.5_ff0.5_uf0.5_client2.ckpt",
        ]
    );
}

#[test]
fn sweep_rejects_bad_value_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "out");
    let err = cmd_sweep(&cfg, SweepAxis::CommonFraction, &[0.2, 1.5], 1).unwrap_err();
    assert_eq!(err.stage, Stage::Config);
    assert!(!cfg.output.exists());
}

#[test]
fn sweep_groups_match_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        strategies: vec![Strategy::FedDmf, Strategy::Random],
        seeds: vec![3],
        ..small_config(dir.path(), "sweep")
    };
    let values = [0.2, 0.4];
    cmd_sweep(&cfg, SweepAxis::C1UserFraction, &values, 0).unwrap();
    let swept = read_results(&cfg.output.join("results.csv"));
    for (i, &v) in values.iter().enumerate() {
        let single = ExperimentConfig {
            c1_user_fraction: v,
            output: dir.path().join(format!("single{i}")),
            ..cfg.clone()
        };
        cmd_run(&single, 1).unwrap();
        let rows = read_results(&single.output.join("results.csv"));
        let group: Vec<RunResult> = swept.iter().filter(|r| r.c1_user_fraction == v).cloned().collect();
        assert_eq!(group, rows);
    }
}

#[test]
fn cli_reports_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.toml");
    fs::write(&cfg_path, "dataset = \"/nonexistent/ratings.csv\"\nepochs = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_feddmf"))
        .args(["run", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stage `load`"), "{stderr}");

    fs::write(&cfg_path, "epochz = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_feddmf"))
        .args(["run", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `config`"));
}

#[test]
fn cli_run_with_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synthetic_csv(dir.path());
    let cfg_path = dir.path().join("c.toml");
    fs::write(
        &cfg_path,
        format!("dataset = {:?}\nstrategies = [\"random\", \"feddmf\"]\nepochs = 1\nembed_dim = 4\nhidden_dim = 4\n", csv),
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    let status = Command::new(env!("CARGO_BIN_EXE_feddmf"))
        .args(["sweep", "--axis", "c1_feature_fraction", "--values", "0.3,0.6", "--jobs", "2", "--seed-list", "5,6", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_dir)
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    let rows = read_results(&out_dir.join("results.csv"));
    assert_eq!(rows.len(), 2 * 2 * 2 * 2 * 2);
    assert!(rows.iter().all(|r| r.seed == 5 || r.seed == 6));
    let echo = fs::read_to_string(out_dir.join("config_echo.toml")).unwrap();
    assert!(echo.contains("sweep_axis = \"c1_feature_fraction\""), "{echo}");
}
