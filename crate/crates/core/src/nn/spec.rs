use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a sequential network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// Valid (unpadded) square-kernel convolution.
    Conv2d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    GlobalAveragePool,
}

impl LayerSpec {
    pub fn is_trainable(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }

    /// Weight shape and fan-in for trainable layers.
    pub fn weight_shape(&self) -> Option<(Vec<usize>, usize)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((vec![outputs, inputs], inputs)),
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                ..
            } => Some((
                vec![filters, in_channels, kernel, kernel],
                in_channels * kernel * kernel,
            )),
            _ => None,
        }
    }

    pub fn bias_len(&self) -> Option<usize> {
        match *self {
            LayerSpec::Dense { outputs, .. } => Some(outputs),
            LayerSpec::Conv2d { filters, .. } => Some(filters),
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(Error::Config(format!(
                        "dense layer expects input [{inputs}], got {input:?}"
                    )));
                }
                if outputs == 0 {
                    return Err(Error::Config("dense layer with zero outputs".into()));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                stride,
            } => {
                let &[c, h, w] = input else {
                    return Err(Error::Config(format!(
                        "conv2d expects [channels, height, width], got {input:?}"
                    )));
                };
                if c != in_channels {
                    return Err(Error::Config(format!("conv2d expects {in_channels} channels, got {c}")));
                }
                if filters == 0 || kernel == 0 || stride == 0 {
                    return Err(Error::Config(
                        "conv2d filters, kernel and stride must be positive".into(),
                    ));
                }
                if kernel > h || kernel > w {
                    return Err(Error::Config(format!(
                        "conv2d kernel {kernel} larger than input {h}x{w}"
                    )));
                }
                Ok(vec![filters, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::GlobalAveragePool => match *input {
                [k, _, _] => Ok(vec![k]),
                _ => Err(Error::Config(format!(
                    "global average pool expects [k, h, w], got {input:?}"
                ))),
            },
        }
    }
}

/// Per-sample input shape plus a layer stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self { input_shape, layers };
        spec.validate()?;
        Ok(spec)
    }

    /// Single dense layer `inputs -> outputs`.
    pub fn dense_head(inputs: usize, outputs: usize) -> Self {
        Self {
            input_shape: vec![inputs],
            layers: vec![LayerSpec::Dense { inputs, outputs }],
        }
    }

    /// Checks that the layer chain is consistent. Returns the per-sample
    /// shapes flowing into each layer followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Config(format!("invalid input shape {:?}", self.input_shape)));
        }
        let mut shapes = vec![self.input_shape.clone()];
        let mut seen_pool = false;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::GlobalAveragePool if seen_pool => {
                    return Err(Error::Config(format!(
                        "layer {i}: at most one global average pool is allowed"
                    )))
                }
                LayerSpec::GlobalAveragePool => seen_pool = true,
                LayerSpec::Conv2d { .. } if seen_pool => {
                    return Err(Error::Config(format!("layer {i}: conv2d after global average pool")))
                }
                _ => {}
            }
            let next = layer
                .output_shape(shapes.last().expect("non-empty"))
                .map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("layer {i}: {m}")),
                    other => other,
                })?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().expect("non-empty"))
    }

    /// Flat feature width at the output; errors unless the output is rank 1.
    pub fn output_width(&self) -> Result<usize> {
        match self.output_shape()?.as_slice() {
            [w] => Ok(*w),
            other => Err(Error::Config(format!(
                "network output {other:?} is not a flat feature vector"
            ))),
        }
    }

    pub fn has_global_pool(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::GlobalAveragePool))
    }

    /// True when the stack ends in global average pooling, so that a dense
    /// head on top has the `f = W * GAP(g)` form.
    pub fn ends_with_global_pool(&self) -> bool {
        matches!(self.layers.last(), Some(LayerSpec::GlobalAveragePool))
    }

    /// conv2d -> relu -> conv2d -> relu -> global average pool.
    pub fn conv_backbone(input_shape: [usize; 3], hidden: usize, filters: usize, kernel: usize) -> Result<Self> {
        Self::new(
            input_shape.to_vec(),
            vec![
                LayerSpec::Conv2d {
                    in_channels: input_shape[0],
                    filters: hidden,
                    kernel,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Conv2d {
                    in_channels: hidden,
                    filters,
                    kernel,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::GlobalAveragePool,
            ],
        )
    }
}
