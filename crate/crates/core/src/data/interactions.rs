use std::collections::HashMap;

use crate::data::movielens::RatingsTable;
use crate::error::{Error, Result};

/// Implicit-feedback view of a ratings table: every rated pair is a positive.
///
/// Users and features get dense indices in order of first appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionDataset {
    user_ids: Vec<u64>,
    feature_ids: Vec<u64>,
    user_index: HashMap<u64, usize>,
    feature_index: HashMap<u64, usize>,
    /// Sorted feature indices per user.
    positives: Vec<Vec<usize>>,
    num_positives: usize,
}

pub fn binarize(table: &RatingsTable) -> Result<InteractionDataset> {
    if table.is_empty() {
        return Err(Error::Config("cannot binarize an empty ratings table".into()));
    }
    let pairs = table.records.iter().map(|r| (r.user_id, r.movie_id));
    InteractionDataset::from_pairs(pairs)
}

impl InteractionDataset {
    /// Builds a dataset from `(external user id, external feature id)` pairs.
    /// Duplicate pairs collapse into one positive.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut ds = InteractionDataset {
            user_ids: Vec::new(),
            feature_ids: Vec::new(),
            user_index: HashMap::new(),
            feature_index: HashMap::new(),
            positives: Vec::new(),
            num_positives: 0,
        };
        for (uid, fid) in pairs {
            let u = *ds.user_index.entry(uid).or_insert_with(|| {
                ds.user_ids.push(uid);
                ds.positives.push(Vec::new());
                ds.user_ids.len() - 1
            });
            let f = *ds.feature_index.entry(fid).or_insert_with(|| {
                ds.feature_ids.push(fid);
                ds.feature_ids.len() - 1
            });
            ds.positives[u].push(f);
        }
        if ds.user_ids.is_empty() {
            return Err(Error::Config("dataset has no interactions".into()));
        }
        for row in &mut ds.positives {
            row.sort_unstable();
            row.dedup();
        }
        ds.num_positives = ds.positives.iter().map(Vec::len).sum();
        Ok(ds)
    }

    /// Dense-index constructor for tests and synthetic data. External ids equal dense indices.
    pub fn from_dense(num_users: usize, num_features: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut positives = vec![Vec::new(); num_users];
        for &(u, f) in pairs {
            if u >= num_users {
                return Err(Error::Index { what: "user", value: u, len: num_users });
            }
            if f >= num_features {
                return Err(Error::Index { what: "feature", value: f, len: num_features });
            }
            positives[u].push(f);
        }
        for row in &mut positives {
            row.sort_unstable();
            row.dedup();
        }
        let user_ids: Vec<u64> = (0..num_users as u64).collect();
        let feature_ids: Vec<u64> = (0..num_features as u64).collect();
        Ok(InteractionDataset {
            user_index: user_ids.iter().map(|&id| (id, id as usize)).collect(),
            feature_index: feature_ids.iter().map(|&id| (id, id as usize)).collect(),
            user_ids,
            feature_ids,
            num_positives: positives.iter().map(Vec::len).sum(),
            positives,
        })
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn num_positives(&self) -> usize {
        self.num_positives
    }

    pub fn user_id(&self, idx: usize) -> u64 {
        self.user_ids[idx]
    }

    pub fn feature_id(&self, idx: usize) -> u64 {
        self.feature_ids[idx]
    }

    pub fn user_idx(&self, id: u64) -> Option<usize> {
        self.user_index.get(&id).copied()
    }

    pub fn feature_idx(&self, id: u64) -> Option<usize> {
        self.feature_index.get(&id).copied()
    }

    /// Sorted positive feature indices of user `u`.
    pub fn positives_of(&self, u: usize) -> &[usize] {
        &self.positives[u]
    }

    pub fn is_positive(&self, u: usize, f: usize) -> bool {
        self.positives[u].binary_search(&f).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::movielens::Rating;

    fn table(rows: &[(u64, u64, f64)]) -> RatingsTable {
        RatingsTable {
            records: rows
                .iter()
                .map(|&(u, m, r)| Rating {
                    user_id: u,
                    movie_id: m,
                    rating: r,
                    timestamp: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn rating_value_ignored() {
        let ds = binarize(&table(&[(1, 10, 0.5), (1, 20, 5.0)])).unwrap();
        assert_eq!(ds.num_positives(), 2);
        assert!(ds.is_positive(0, 0) && ds.is_positive(0, 1));
    }

    #[test]
    fn positives_match_records() {
        let t = table(&[(3, 1, 4.0), (5, 2, 3.0), (3, 2, 1.0), (9, 1, 2.0), (9, 2, 2.5)]);
        let ds = binarize(&t).unwrap();
        assert_eq!(ds.num_users(), 3);
        assert_eq!(ds.num_features(), 2);
        assert_eq!(ds.num_positives(), t.len());
        // first-appearance order
        assert_eq!(ds.user_id(0), 3);
        assert_eq!(ds.user_id(1), 5);
        assert_eq!(ds.feature_id(1), 2);
    }

    #[test]
    fn index_maps_roundtrip() {
        let t = table(&[(42, 7, 1.0), (17, 8, 1.0), (42, 99, 1.0)]);
        let ds = binarize(&t).unwrap();
        for r in &t.records {
            let u = ds.user_idx(r.user_id).unwrap();
            let f = ds.feature_idx(r.movie_id).unwrap();
            assert_eq!(ds.user_id(u), r.user_id);
            assert_eq!(ds.feature_id(f), r.movie_id);
            assert!(ds.is_positive(u, f));
        }
    }

    #[test]
    fn empty_table_rejected() {
        assert!(matches!(binarize(&RatingsTable::default()), Err(Error::Config(_))));
    }
}
