//! Two-client federated split.
//!
//! Features are shuffled and cut into a common part and one exclusive part per
//! client. Users are shuffled and cut into disjoint client sets. Client `c`
//! trains on `users_c × (exclusive_c ∪ common)` and is tested on
//! `users_c × exclusive_other`.
//!
//! Part sizes round up: the common part holds `⌈common_fraction · F⌉` features,
//! client 1 gets `⌈client1_feature_fraction · R⌉` of the `R` remaining ones and
//! `⌈client1_user_fraction · U⌉` users. Products within `1e-9` of an integer
//! are snapped to it first so that e.g. `0.1 · 30` counts as 3.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::interactions::InteractionDataset;
use crate::error::{Error, Result};
use crate::nn::rng::{streams, Rng};

pub const NUM_CLIENTS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of all features shared by both clients.
    pub common_fraction: f64,
    /// Fraction of the non-common features owned by client 1.
    pub client1_feature_fraction: f64,
    /// Fraction of all users owned by client 1.
    pub client1_user_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(common: f64, c1_features: f64, c1_users: f64, seed: u64) -> Self {
        SplitSpec {
            common_fraction: common,
            client1_feature_fraction: c1_features,
            client1_user_fraction: c1_users,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("common_fraction", self.common_fraction),
            ("client1_feature_fraction", self.client1_feature_fraction),
            ("client1_user_fraction", self.client1_user_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Number of elements a fraction of `n` claims, rounding up.
pub fn part_size(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let snapped = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() };
    (snapped.max(0.0) as usize).min(n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientPart {
    /// Sorted global user indices.
    pub users: Vec<usize>,
    /// Sorted global feature indices only this client trains on.
    pub exclusive_features: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FederatedSplit {
    pub spec: SplitSpec,
    pub num_users: usize,
    pub num_features: usize,
    /// Sorted global feature indices shared by all clients.
    pub common_features: Vec<usize>,
    pub clients: Vec<ClientPart>,
}

const PART_NAMES: [&str; 5] = [
    "common_features",
    "client1_exclusive_features",
    "client2_exclusive_features",
    "client1_users",
    "client2_users",
];

pub fn make_split(dataset: &InteractionDataset, spec: SplitSpec) -> Result<FederatedSplit> {
    make_split_sized(dataset.num_users(), dataset.num_features(), spec)
}

/// Split over index spaces of the given sizes.
pub fn make_split_sized(num_users: usize, num_features: usize, spec: SplitSpec) -> Result<FederatedSplit> {
    spec.validate()?;
    let mut features: Vec<usize> = (0..num_features).collect();
    Rng::derive(spec.seed, streams::SPLIT_FEATURES).shuffle(&mut features);
    let n_common = part_size(spec.common_fraction, num_features);
    let rest = &features[n_common..];
    let n_c1 = part_size(spec.client1_feature_fraction, rest.len());

    let mut users: Vec<usize> = (0..num_users).collect();
    Rng::derive(spec.seed, streams::SPLIT_USERS).shuffle(&mut users);
    let n_u1 = part_size(spec.client1_user_fraction, num_users);

    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    let split = FederatedSplit {
        spec,
        num_users,
        num_features,
        common_features: sorted(&features[..n_common]),
        clients: vec![
            ClientPart {
                users: sorted(&users[..n_u1]),
                exclusive_features: sorted(&rest[..n_c1]),
            },
            ClientPart {
                users: sorted(&users[n_u1..]),
                exclusive_features: sorted(&rest[n_c1..]),
            },
        ],
    };
    split.check_nonempty()?;
    Ok(split)
}

impl FederatedSplit {
    fn parts(&self) -> [&[usize]; 5] {
        [
            &self.common_features,
            &self.clients[0].exclusive_features,
            &self.clients[1].exclusive_features,
            &self.clients[0].users,
            &self.clients[1].users,
        ]
    }

    fn check_nonempty(&self) -> Result<()> {
        for (name, part) in PART_NAMES.iter().zip(self.parts()) {
            if part.is_empty() {
                return Err(Error::DegenerateSplit { part: name });
            }
        }
        Ok(())
    }

    /// Verifies the partition laws: users split into disjoint exhaustive client
    /// sets; common and exclusive features form a disjoint cover of all features.
    pub fn validate(&self) -> Result<()> {
        if self.clients.len() != NUM_CLIENTS {
            return Err(Error::Config(format!("expected {NUM_CLIENTS} clients, found {}", self.clients.len())));
        }
        self.check_nonempty()?;
        let check_cover = |what: &'static str, n: usize, parts: &[&[usize]]| -> Result<()> {
            let mut seen = vec![false; n];
            for part in parts {
                for &i in *part {
                    if i >= n {
                        return Err(Error::Index { what, value: i, len: n });
                    }
                    if std::mem::replace(&mut seen[i], true) {
                        return Err(Error::Config(format!("{what} {i} assigned to more than one part")));
                    }
                }
            }
            match seen.iter().position(|s| !s) {
                Some(i) => Err(Error::Config(format!("{what} {i} assigned to no part"))),
                None => Ok(()),
            }
        };
        let p = self.parts();
        check_cover("feature", self.num_features, &p[..3])?;
        check_cover("user", self.num_users, &p[3..])
    }

    pub fn other(client: usize) -> usize {
        1 - client
    }

    /// Features client `client` trains on: its exclusive ones plus the common ones, sorted.
    pub fn train_features(&self, client: usize) -> Vec<usize> {
        let mut v = self.clients[client].exclusive_features.clone();
        v.extend_from_slice(&self.common_features);
        v.sort_unstable();
        v
    }

    /// Features client `client` is evaluated on at test time: the other client's exclusive ones.
    pub fn test_features(&self, client: usize) -> &[usize] {
        &self.clients[Self::other(client)].exclusive_features
    }

    /// Client owning each global user index.
    pub fn user_owner(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.num_users];
        for (c, part) in self.clients.iter().enumerate() {
            for &u in &part.users {
                owner[u] = c;
            }
        }
        owner
    }

    pub fn to_manifest(&self, dataset: &InteractionDataset) -> SplitManifest {
        let users = |v: &[usize]| v.iter().map(|&u| dataset.user_id(u)).collect();
        let feats = |v: &[usize]| v.iter().map(|&f| dataset.feature_id(f)).collect();
        SplitManifest {
            seed: self.spec.seed,
            common_fraction: self.spec.common_fraction,
            client1_feature_fraction: self.spec.client1_feature_fraction,
            client1_user_fraction: self.spec.client1_user_fraction,
            num_users: self.num_users,
            num_features: self.num_features,
            common_features: feats(&self.common_features),
            client1_exclusive_features: feats(&self.clients[0].exclusive_features),
            client2_exclusive_features: feats(&self.clients[1].exclusive_features),
            client1_users: users(&self.clients[0].users),
            client2_users: users(&self.clients[1].users),
        }
    }

    pub fn from_manifest(manifest: &SplitManifest, dataset: &InteractionDataset) -> Result<FederatedSplit> {
        if manifest.num_users != dataset.num_users() || manifest.num_features != dataset.num_features() {
            return Err(Error::Config(format!(
                "manifest describes {} users x {} features, dataset has {} x {}",
                manifest.num_users,
                manifest.num_features,
                dataset.num_users(),
                dataset.num_features()
            )));
        }
        let users = |ids: &[u64]| -> Result<Vec<usize>> {
            let mut v = ids
                .iter()
                .map(|&id| dataset.user_idx(id).ok_or_else(|| Error::Config(format!("unknown user id {id} in manifest"))))
                .collect::<Result<Vec<_>>>()?;
            v.sort_unstable();
            Ok(v)
        };
        let feats = |ids: &[u64]| -> Result<Vec<usize>> {
            let mut v = ids
                .iter()
                .map(|&id| dataset.feature_idx(id).ok_or_else(|| Error::Config(format!("unknown feature id {id} in manifest"))))
                .collect::<Result<Vec<_>>>()?;
            v.sort_unstable();
            Ok(v)
        };
        let split = FederatedSplit {
            spec: SplitSpec::new(
                manifest.common_fraction,
                manifest.client1_feature_fraction,
                manifest.client1_user_fraction,
                manifest.seed,
            ),
            num_users: manifest.num_users,
            num_features: manifest.num_features,
            common_features: feats(&manifest.common_features)?,
            clients: vec![
                ClientPart {
                    users: users(&manifest.client1_users)?,
                    exclusive_features: feats(&manifest.client1_exclusive_features)?,
                },
                ClientPart {
                    users: users(&manifest.client2_users)?,
                    exclusive_features: feats(&manifest.client2_exclusive_features)?,
                },
            ],
        };
        split.validate()?;
        Ok(split)
    }
}

/// On-disk form of a split, keyed by external ids so it survives re-indexing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub seed: u64,
    pub common_fraction: f64,
    pub client1_feature_fraction: f64,
    pub client1_user_fraction: f64,
    pub num_users: usize,
    pub num_features: usize,
    pub common_features: Vec<u64>,
    pub client1_exclusive_features: Vec<u64>,
    pub client2_exclusive_features: Vec<u64>,
    pub client1_users: Vec<u64>,
    pub client2_users: Vec<u64>,
}

impl SplitManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<SplitManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: 0,
            message: e.to_string(),
        })
    }
}
