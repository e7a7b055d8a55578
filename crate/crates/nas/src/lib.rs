//! A weight-shared two-descriptor gait network whose fusion cell is found by
//! differentiable architecture search, plus retraining and rank-1 evaluation.

// `!(x <= y)`-style comparisons deliberately treat NaN as out of range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod data;
mod error;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod ops;
pub mod params;
pub mod run;
pub mod search;

pub use cell::{md_cell_forward, mixed_op, CellArchitecture, CellMode, EDGES, NUM_EDGES};
pub use data::{sample_batch, split_dataset, Batch, Dataset, Sample};
pub use error::{NasError, Phase, Result};
pub use loss::{batch_all_triplet, cross_entropy, pairwise_distances, total_loss, DEFAULT_MARGIN};
pub use model::{
    embedding_head, feature_extract, forward, gem_pool, init_model, model_params, validate_params, ModelConfig,
};
pub use ops::{apply_op, op_params, OpContext, OpKind, NUM_OPS};
pub use params::{ParamLookup, Scoped};
pub use search::{
    discretize, embed, evaluate_rank1, retrain, search, LossRecord, Progress, RetrainOutcome, SearchConfig,
    SearchOutcome, SearchState,
};
