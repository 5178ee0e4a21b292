//! Federated deep matrix factorization simulator.
//!
//! Several clients hold disjoint users and partially overlapping features
//! (items). Each trains its own DMF model. The only thing that crosses a client
//! boundary is the embedding rows of the features both clients share, pulled
//! together with a cosine-margin penalty. Centralized DMF, FedAvg and a random
//! scorer are included as baselines.
//!
//! Module map:
//!
//! - [`nn`]: matrices, layers with analytic gradients, losses, RNG, optimizers
//! - [`model`]: the two-tower DMF network and its checkpoint format
//! - [`data`]: MovieLens CSV ingest, implicit-feedback binarization, the
//!   two-client split, negative sampling
//! - [`federation`]: the four training strategies and the exchange audit log
//! - [`metrics`]: thresholded precision / recall / F1
//! - [`experiment`]: config files, single runs, sweeps, result tables

pub mod data;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod metrics;
pub mod model;
pub mod nn;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use model::{DmfModel, Fusion, ModelShape};
pub use nn::{Matrix, Rng};
