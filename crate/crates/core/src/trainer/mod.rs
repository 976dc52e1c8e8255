//! Dual-branch training: one shared backbone, a known-class head trained
//! with cross-entropy and membership loss, and a reference-class head
//! trained with cross-entropy on an external dataset.

mod checkpoint;
mod config;
mod model;
mod step;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{LossWeights, TrainingConfig, TrainingMode};
pub use model::DualBranchModel;
pub use step::{
    compute_gradients, train, train_observed, train_step, EpochMetrics, LabeledBatch, ModelGradients, StepMetrics,
    TrainerState,
};
