//! Dense numeric core: matrices, layer primitives with analytic gradients,
//! losses, a seeded RNG and optimizers.

pub mod layers;
pub mod loss;
pub mod matrix;
pub mod optim;
pub mod rng;

pub use layers::{dropout, dropout_backward, relu, relu_backward, sigmoid, sigmoid_backward, DenseLayer, Embedding};
pub use loss::{cosine_margin_loss, mse_loss};
pub use matrix::Matrix;
pub use optim::{sgd_step, Optimizer, OptimizerKind, ParamSet, ParamSlot};
pub use rng::Rng;
