//! Save a trained model as a text checkpoint and reload it bit-for-bit.
//!
//! cargo run --release --example checkpoint

use feddmf::data::{binarize, make_split, SplitSpec, SyntheticSpec};
use feddmf::federation::{train_centralized, TrainConfig};
use feddmf::DmfModel;

fn main() -> feddmf::Result<()> {
    let dataset = binarize(&SyntheticSpec::default().generate()?)?;
    let split = make_split(&dataset, SplitSpec::new(0.5, 0.5, 0.5, 1))?;
    let (model, _) = train_centralized(&dataset, &split, &TrainConfig { epochs: 3, ..Default::default() })?;

    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("centralized.ckpt");
    model.save(&path)?;
    let restored = DmfModel::load(&path)?;

    let users = &split.clients[0].users[..5];
    let feats = restored.feature_embeddings.lookup(&split.common_features[..3])?;
    let before = model.score_grid(users, &feats)?;
    let after = restored.score_grid(users, &feats)?;
    assert_eq!(before, after);
    assert!(restored == model);

    let text = std::fs::read_to_string(&path).expect("read back");
    for line in text.lines().take(4) {
        println!("{}", if line.len() > 72 { &line[..72] } else { line });
    }
    println!("... {} bytes, reload identical, sample scores {:.4?}", text.len(), &after[..3]);
    Ok(())
}
