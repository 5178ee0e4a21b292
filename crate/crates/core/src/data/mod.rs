//! Ratings ingest, implicit-feedback binarization, the two-client split and
//! training/evaluation pair generation.

pub mod interactions;
pub mod movielens;
pub mod sampling;
pub mod split;
pub mod synthetic;

pub use interactions::{binarize, InteractionDataset};
pub use movielens::{load_movielens_csv, Rating, RatingsTable, TableCounts};
pub use sampling::{sample_batches, test_block, test_block_pairs, train_eval_block, Batch, Block, TrainBlock, TrainingMode};
pub use split::{make_split, make_split_sized, part_size, ClientPart, FederatedSplit, SplitManifest, SplitSpec, NUM_CLIENTS};
pub use synthetic::SyntheticSpec;
