use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
}

impl ParamRole {
    fn as_str(self) -> &'static str {
        match self {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
        }
    }
}

/// Key of a trainable tensor: `"<layer index>.<weight|bias>"`.
pub fn param_key(layer: usize, role: ParamRole) -> String {
    format!("{layer}.{}", role.as_str())
}

/// Named parameter tensors, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn layer(&self, layer: usize, role: ParamRole) -> Result<&Tensor> {
        self.require(&param_key(layer, role))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Errors unless `other` has exactly the same names and shapes.
    pub fn check_same_layout(&self, other: &ParamSet) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Dimension(format!(
                "parameter count {} vs {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for ((ka, ta), (kb, tb)) in self.tensors.iter().zip(&other.tensors) {
            if ka != kb || ta.shape() != tb.shape() {
                return Err(Error::Dimension(format!(
                    "parameter `{ka}` {:?} vs `{kb}` {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    /// Element-wise sum of two identically laid out sets.
    pub fn add_assign(&mut self, other: &ParamSet) -> Result<()> {
        self.check_same_layout(other)?;
        for (t, o) in self.tensors.values_mut().zip(other.tensors.values()) {
            t.add_assign(o)?;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.tensors
            .iter()
            .filter_map(|(k, t)| other.get(k).map(|o| t.max_abs_diff(o)))
            .fold(0.0, f64::max)
    }

    /// Copies every tensor into `target` with `prefix` prepended to its name.
    pub fn export_prefixed(&self, prefix: &str, target: &mut ParamSet) {
        for (k, t) in &self.tensors {
            target.insert(format!("{prefix}{k}"), t.clone());
        }
    }

    /// Inverse of [`ParamSet::export_prefixed`].
    pub fn import_prefixed(source: &ParamSet, prefix: &str) -> ParamSet {
        ParamSet {
            tensors: source
                .tensors
                .iter()
                .filter_map(|(k, t)| k.strip_prefix(prefix).map(|s| (s.to_owned(), t.clone())))
                .collect(),
        }
    }

    /// Errors unless the set holds exactly the tensors `spec` requires.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        let mut expected = 0;
        for (i, layer) in spec.layers.iter().enumerate() {
            if let (Some((wshape, _)), Some(blen)) = (layer.weight_shape(), layer.bias_len()) {
                expected += 2;
                let w = self.layer(i, ParamRole::Weight)?;
                let b = self.layer(i, ParamRole::Bias)?;
                if w.shape() != wshape.as_slice() || b.shape() != [blen] {
                    return Err(Error::Config(format!(
                        "layer {i}: parameter shapes {:?}/{:?}, expected {:?}/[{blen}]",
                        w.shape(),
                        b.shape(),
                        wshape
                    )));
                }
            }
        }
        if expected != self.len() {
            return Err(Error::Config(format!(
                "parameter set has {} tensors, spec needs {expected}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Seeded ChaCha8 generator on a numbered stream, so that independent
/// components drawn from one seed never share random numbers.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ParamSet> {
    init_params_with(spec, &mut seeded_rng(seed, 0))
}

pub fn init_params_with<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Result<ParamSet> {
    spec.validate()?;
    let mut params = ParamSet::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        let (Some((wshape, fan_in)), Some(blen)) = (layer.weight_shape(), layer.bias_len()) else {
            continue;
        };
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = wshape.iter().product();
        let data = (0..n).map(|_| (2.0 * rng.random::<f64>() - 1.0) * bound).collect();
        params.insert(param_key(i, ParamRole::Weight), Tensor::new(wshape, data)?);
        params.insert(param_key(i, ParamRole::Bias), Tensor::zeros(&[blen]));
    }
    Ok(params)
}
