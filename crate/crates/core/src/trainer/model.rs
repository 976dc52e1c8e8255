use crate::error::{Error, Result};
use crate::nn::{init_params_with, seeded_rng, Network, NetworkSpec};
use crate::tensor::Tensor;

// Seed streams; each component gets its own so that adding or removing the
// reference head never changes how the others are initialised.
const STREAM_BACKBONE: u64 = 0;
const STREAM_KNOWN_HEAD: u64 = 1;
const STREAM_REFERENCE_HEAD: u64 = 2;

/// One shared feature extractor feeding a known-class head and an optional
/// reference-class head.
///
/// The backbone is stored once, so both branches always see the same
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBranchModel {
    pub backbone: Network,
    pub known_head: Network,
    pub reference_head: Option<Network>,
    /// Number of leading known-head outputs that are known classes. Equal to
    /// the head width except for the joint-head baseline, whose head also
    /// covers the reference classes.
    pub known_classes: usize,
}

impl DualBranchModel {
    /// `reference_classes == 0` builds a model without a reference head.
    pub fn build(
        backbone_spec: NetworkSpec,
        known_classes: usize,
        reference_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if known_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 known classes, got {known_classes}"
            )));
        }
        let width = backbone_spec.output_width()?;
        let params = init_params_with(&backbone_spec, &mut seeded_rng(seed, STREAM_BACKBONE))?;
        let backbone = Network::new(backbone_spec, params)?;
        let known_head = init_head(width, known_classes, seed, STREAM_KNOWN_HEAD)?;
        let reference_head = match reference_classes {
            0 => None,
            r => Some(init_head(width, r, seed, STREAM_REFERENCE_HEAD)?),
        };
        Ok(Self {
            backbone,
            known_head,
            reference_head,
            known_classes,
        })
    }

    /// Single head with `known_classes + reference_classes` outputs.
    pub fn build_joint(
        backbone_spec: NetworkSpec,
        known_classes: usize,
        reference_classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut m = Self::build(backbone_spec, known_classes + reference_classes, 0, seed)?;
        m.known_classes = known_classes;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let width = self.backbone.spec.output_width()?;
        for head in std::iter::once(&self.known_head).chain(self.reference_head.as_ref()) {
            if head.spec.input_shape != [width] || head.spec.layers.len() != 1 {
                return Err(Error::Config(format!(
                    "head expects input {:?}, backbone emits [{width}]",
                    head.spec.input_shape
                )));
            }
        }
        if self.known_classes < 2 || self.known_classes > self.known_head_outputs()? {
            return Err(Error::Config(format!(
                "known class count {} does not fit the known head",
                self.known_classes
            )));
        }
        Ok(())
    }

    pub fn feature_width(&self) -> Result<usize> {
        self.backbone.spec.output_width()
    }

    pub fn known_head_outputs(&self) -> Result<usize> {
        self.known_head.spec.output_width()
    }

    pub fn reference_classes(&self) -> usize {
        self.reference_head
            .as_ref()
            .and_then(|h| h.spec.output_width().ok())
            .unwrap_or(0)
    }

    pub fn features(&self, batch: &Tensor) -> Result<Tensor> {
        self.backbone.predict(batch)
    }

    /// Backbone features along the known-class branch.
    pub fn known_branch_features(&self, batch: &Tensor) -> Result<Tensor> {
        self.backbone.predict(batch)
    }

    /// Backbone features along the reference branch.
    pub fn reference_branch_features(&self, batch: &Tensor) -> Result<Tensor> {
        self.backbone.predict(batch)
    }

    /// Raw known-head activations (all head outputs).
    pub fn known_logits(&self, batch: &Tensor) -> Result<Tensor> {
        self.known_head.predict(&self.features(batch)?)
    }

    pub fn reference_logits(&self, batch: &Tensor) -> Result<Tensor> {
        let head = self
            .reference_head
            .as_ref()
            .ok_or_else(|| Error::Usage("model has no reference head".into()))?;
        head.predict(&self.features(batch)?)
    }

    /// Known-head weight matrix `[outputs, feature width]`.
    pub fn known_head_weights(&self) -> Result<&Tensor> {
        self.known_head.params.require("0.weight")
    }
}

fn init_head(width: usize, outputs: usize, seed: u64, stream: u64) -> Result<Network> {
    let spec = NetworkSpec::dense_head(width, outputs);
    let params = init_params_with(&spec, &mut seeded_rng(seed, stream))?;
    Network::new(spec, params)
}
