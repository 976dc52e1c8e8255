//! SGD with momentum.

use super::params::ParamSet;
use crate::error::{Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: ParamSet,
}

impl OptimizerState {
    /// Zero velocity shaped like `params`.
    pub fn new(learning_rate: f64, momentum: f64, params: &ParamSet) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {learning_rate} must be >= 0")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(Self {
            learning_rate,
            momentum,
            velocity: params.zeros_like(),
        })
    }

    pub fn velocity(&self) -> &ParamSet {
        &self.velocity
    }
}

/// `v <- momentum * v + g; p <- p - lr * v`.
///
/// Gradients are checked for finiteness before anything is modified.
pub fn sgd_step(params: &mut ParamSet, grads: &ParamSet, state: &mut OptimizerState) -> Result<()> {
    params.check_same_layout(grads)?;
    params.check_same_layout(&state.velocity)?;
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
        return Err(Error::Divergence { param: name.clone() });
    }
    let (lr, mu) = (state.learning_rate, state.momentum);
    for ((_, p), ((_, g), (_, v))) in params.iter_mut().zip(grads.iter().zip(state.velocity.iter_mut())) {
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = mu * *vv + gv;
            *pv -= lr * *vv;
        }
    }
    Ok(())
}
