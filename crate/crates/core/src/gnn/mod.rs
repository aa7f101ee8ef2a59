//! Dense graph neural networks with reverse-mode gradients.
//!
//! Everything is full-batch and 64-bit. The dual model trains two GCNs
//! jointly: the first produces node representations whose cosine similarities
//! extend the adjacency seen by the second, and the gradient of the
//! classification loss flows back into the first through that adjacency.

pub mod checkpoint;
pub mod gradcheck;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod tape;
pub mod train;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use matrix::DenseMatrix;
pub use model::{
    adjacency_from_edges, argmax_rows, fuse_adjacency, gcn_forward, similarity_matrix, sym_normalize, DropoutCtx,
    GcnParams,
};
pub use optim::AdamW;
pub use tape::{Tape, Var};
pub use train::{train_dual, train_gcn, train_mlp, EpochRecord, GraphInput, ModelKind, Targets, TrainConfig, TrainedModel};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("adjacency entry ({i}, {j}) = {value} is negative or not finite")]
    NegativeWeight { i: usize, j: usize, value: f64 },
    #[error("loss became NaN or infinite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("input features contain NaN or infinite values")]
    NonFiniteInput,
    #[error("the training split has no labeled nodes")]
    EmptyTrain,
    #[error("invalid training configuration: {0}")]
    Config(String),
}
