//! Minimal layer stack: dense, valid conv2d, ReLU and global average pooling,
//! with exact backward passes and SGD-with-momentum.

mod gradcheck;
mod layers;
mod optim;
mod params;
mod spec;

pub use gradcheck::{finite_difference_grad, max_relative_error};
pub use layers::{backward, forward, global_average_pool, predict, ForwardCache, Gradients};
pub use optim::{sgd_step, OptimizerState, DEFAULT_LEARNING_RATE, DEFAULT_MOMENTUM};
pub use params::{init_params, init_params_with, param_key, seeded_rng, ParamRole, ParamSet};
pub use spec::{LayerSpec, NetworkSpec};

use crate::error::Result;
use crate::tensor::Tensor;

/// A spec together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: ParamSet,
}

impl Network {
    pub fn new(spec: NetworkSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        params.check_against(&spec)?;
        Ok(Self { spec, params })
    }

    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let params = init_params(&spec, seed)?;
        Ok(Self { spec, params })
    }

    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
        forward(&self.spec, &self.params, batch)
    }

    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        predict(&self.spec, &self.params, batch)
    }

    pub fn backward(&self, cache: &ForwardCache, grad_output: &Tensor) -> Result<Gradients> {
        backward(&self.spec, &self.params, cache, grad_output)
    }
}
