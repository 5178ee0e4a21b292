//! Synthetic ratings with latent-factor structure, for demos and tests that
//! should not depend on a downloaded dataset.
//!
//! Each user draws a preference vector, each item an attribute vector and a
//! popularity offset. A user rates the `k` items with the highest
//! `affinity · ⟨u, v⟩/√d + popularity + Gumbel noise`, which samples `k` items
//! without replacement from the corresponding softmax.

use crate::data::movielens::{Rating, RatingsTable};
use crate::error::{Error, Result};
use crate::nn::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub latent_dim: usize,
    /// Mean number of rated items per user.
    pub mean_ratings_per_user: usize,
    /// Weight of the user-item affinity relative to popularity.
    pub affinity: f64,
    /// Spread of the per-item popularity offsets.
    pub popularity_spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 200,
            items: 300,
            latent_dim: 2,
            mean_ratings_per_user: 30,
            affinity: 4.0,
            popularity_spread: 1.5,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn generate(&self) -> Result<RatingsTable> {
        if self.users == 0 || self.items == 0 || self.latent_dim == 0 {
            return Err(Error::Config("synthetic dataset needs users, items and latent_dim >= 1".into()));
        }
        if self.mean_ratings_per_user == 0 || self.mean_ratings_per_user > self.items {
            return Err(Error::Config(format!(
                "mean_ratings_per_user must lie in 1..={}",
                self.items
            )));
        }
        let mut rng = Rng::new(self.seed);
        let d = self.latent_dim;
        let mut draw = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect() };
        let user_vecs = draw(self.users);
        let item_vecs = draw(self.items);
        let popularity: Vec<f64> = (0..self.items).map(|_| self.popularity_spread * rng.normal()).collect();
        let scale = self.affinity / (d as f64).sqrt();

        let mut records = Vec::new();
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(self.items);
        let mut ts: i64 = 1_000_000_000;
        for (u, uv) in user_vecs.iter().enumerate() {
            // per-user activity varies between half and 1.5x the mean
            let k = ((self.mean_ratings_per_user as f64) * rng.uniform_in(0.5, 1.5)).round() as usize;
            let k = k.clamp(1, self.items);
            scored.clear();
            for (i, iv) in item_vecs.iter().enumerate() {
                let dot: f64 = uv.iter().zip(iv).map(|(a, b)| a * b).sum();
                let gumbel = -(-(1.0 - rng.uniform()).ln()).ln();
                scored.push((scale * dot + popularity[i] + gumbel, i));
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, i) in &scored[..k] {
                ts += 1;
                records.push(Rating {
                    user_id: u as u64 + 1,
                    movie_id: i as u64 + 1,
                    rating: (rng.below(10) as f64 + 1.0) * 0.5,
                    timestamp: ts,
                });
            }
        }
        Ok(RatingsTable { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let spec = SyntheticSpec {
            users: 30,
            items: 50,
            mean_ratings_per_user: 10,
            ..Default::default()
        };
        let a = spec.generate().unwrap();
        assert_eq!(a, spec.generate().unwrap());
        let c = a.counts();
        assert_eq!(c.users, 30);
        assert!(c.ratings >= 30 * 5 && c.ratings <= 30 * 15);
        assert!(a.records.iter().all(|r| (0.5..=5.0).contains(&r.rating)));
    }

    #[test]
    fn rejects_impossible_density() {
        let spec = SyntheticSpec {
            items: 5,
            mean_ratings_per_user: 6,
            ..Default::default()
        };
        assert!(spec.generate().is_err());
    }
}
