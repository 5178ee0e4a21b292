//! Two-client split of a ratings table, written to and read back from a manifest.
//!
//! cargo run --example federated_split

use feddmf::data::{binarize, make_split, test_block, FederatedSplit, SplitManifest, SplitSpec, SyntheticSpec, TrainBlock};

fn main() -> feddmf::Result<()> {
    let ratings = SyntheticSpec::default().generate()?;
    let dataset = binarize(&ratings)?;
    let split = make_split(&dataset, SplitSpec::new(0.5, 0.5, 0.5, 1))?;

    println!(
        "{} users, {} features, {} common features",
        dataset.num_users(),
        dataset.num_features(),
        split.common_features.len()
    );
    for (c, part) in split.clients.iter().enumerate() {
        let train = TrainBlock::for_client(&split, c, &dataset);
        let test = test_block(&split, c);
        println!(
            "client {}: {} users, {} exclusive features, train block {} pairs ({} positive), test block {} pairs ({} positive)",
            c + 1,
            part.users.len(),
            part.exclusive_features.len(),
            train.area(),
            train.positives().len(),
            test.area(),
            test.positive_count(&dataset)
        );
    }

    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("split.toml");
    split.to_manifest(&dataset).save(&path)?;
    let restored = FederatedSplit::from_manifest(&SplitManifest::load(&path)?, &dataset)?;
    assert_eq!(restored, split);
    println!("manifest round-trip ok ({} bytes)", std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0));
    Ok(())
}
