//! Multi-class novelty detection with a membership loss and a shared-backbone
//! reference-dataset branch.
//!
//! - [`nn`]: dense/conv/ReLU/global-average-pool stack with exact gradients
//! - [`losses`]: softmax cross-entropy and the sigmoid membership loss
//! - [`trainer`]: dual-branch model, training modes and checkpoints
//! - [`eval`]: max-activation novelty scores, thresholds, ROC/AUC, accuracy
//! - [`data`]: IDX/CSV loaders, Gaussian benchmark, split protocol
//! - [`filters`]: positive/negative and globally negative filter analysis
//! - [`experiment`]: end-to-end runs and ablations

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod filters;
pub mod fsutil;
pub mod losses;
pub mod nn;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
