use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{TrainingConfig, TrainingMode};
use super::model::DualBranchModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{cross_entropy, cumulative_loss, membership_loss};
use crate::nn::{seeded_rng, sgd_step, OptimizerState, ParamSet};
use crate::tensor::Tensor;

const STREAM_KNOWN_ORDER: u64 = 3;
const STREAM_REFERENCE_ORDER: u64 = 4;

/// Inputs and labels of one mini-batch.
#[derive(Debug, Clone, Copy)]
pub struct LabeledBatch<'a> {
    pub x: &'a Tensor,
    pub labels: &'a [usize],
}

/// Loss components of one step (or epoch means of them).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub ce_reference: f64,
    pub ce_known: f64,
    pub membership_known: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: StepMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradients {
    pub backbone: ParamSet,
    pub known_head: ParamSet,
    pub reference_head: Option<ParamSet>,
}

/// Velocities for every trainable component.
#[derive(Debug, Clone)]
pub struct TrainerState {
    backbone: OptimizerState,
    known_head: OptimizerState,
    reference_head: Option<OptimizerState>,
}

impl TrainerState {
    pub fn new(model: &DualBranchModel, cfg: &TrainingConfig) -> Result<Self> {
        let opt = |p: &ParamSet| OptimizerState::new(cfg.learning_rate, cfg.momentum, p);
        Ok(Self {
            backbone: opt(&model.backbone.params)?,
            known_head: opt(&model.known_head.params)?,
            reference_head: model.reference_head.as_ref().map(|h| opt(&h.params)).transpose()?,
        })
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            param: format!("loss:{name}"),
        })
    }
}

/// Losses and gradients for one step.
///
/// When a reference batch is given the two batches run through the backbone
/// as one concatenated batch and the per-branch upstream gradients are
/// concatenated for a single backbone backward pass.
pub fn compute_gradients(
    model: &DualBranchModel,
    known: LabeledBatch<'_>,
    reference: Option<LabeledBatch<'_>>,
    cfg: &TrainingConfig,
) -> Result<(ModelGradients, StepMetrics)> {
    let weights = cfg.loss_weights();
    let reference = match (reference, cfg.mode.has_reference_branch()) {
        (Some(r), true) => Some(r),
        (None, true) => return Err(Error::Config(format!("mode {} needs a reference batch", cfg.mode))),
        (_, false) => None,
    };
    let ref_head = match reference {
        Some(_) => Some(
            model
                .reference_head
                .as_ref()
                .ok_or_else(|| Error::Config("model has no reference head".into()))?,
        ),
        None => None,
    };

    let n_known = known.x.batch_len();
    let input = match reference {
        Some(r) => Tensor::concat_batch(known.x, r.x)?,
        None => known.x.clone(),
    };
    let (features, cache) = model.backbone.forward(&input)?;
    let (feat_known, feat_ref) = features.split_batch(n_known)?;

    let (logits, head_cache) = model.known_head.forward(&feat_known)?;
    let ce = cross_entropy(&logits, known.labels)?;
    let mem = membership_loss(&logits, known.labels, cfg.membership())?;
    check_finite("ce_known", ce.value)?;
    check_finite("membership_known", mem.value)?;
    let mut upstream = ce.grad;
    upstream.scale(weights.known_ce);
    upstream.add_scaled(&mem.grad, weights.known_membership)?;
    let known_grads = model.known_head.backward(&head_cache, &upstream)?;

    let mut metrics = StepMetrics {
        ce_reference: 0.0,
        ce_known: ce.value,
        membership_known: mem.value,
        cumulative: 0.0,
    };

    let (feature_grad, reference_head) = match (reference, ref_head) {
        (Some(r), Some(head)) => {
            let (rlogits, rcache) = head.forward(&feat_ref)?;
            let rce = cross_entropy(&rlogits, r.labels)?;
            check_finite("ce_reference", rce.value)?;
            let mut rup = rce.grad;
            rup.scale(weights.reference_ce);
            let rgrads = head.backward(&rcache, &rup)?;
            metrics.ce_reference = rce.value;
            (
                Tensor::concat_batch(&known_grads.input, &rgrads.input)?,
                Some(rgrads.params),
            )
        }
        _ => (known_grads.input, None),
    };
    metrics.cumulative = cumulative_loss(
        weights.reference_ce * metrics.ce_reference,
        metrics.ce_known,
        metrics.membership_known,
        weights.known_ce,
        weights.known_membership,
    );

    let backbone = model.backbone.backward(&cache, &feature_grad)?.params;
    Ok((
        ModelGradients {
            backbone,
            known_head: known_grads.params,
            reference_head,
        },
        metrics,
    ))
}

/// One SGD step on the backbone and every head that received a gradient.
pub fn train_step(
    model: &mut DualBranchModel,
    state: &mut TrainerState,
    known: LabeledBatch<'_>,
    reference: Option<LabeledBatch<'_>>,
    cfg: &TrainingConfig,
) -> Result<StepMetrics> {
    let (grads, metrics) = compute_gradients(model, known, reference, cfg)?;
    sgd_step(&mut model.backbone.params, &grads.backbone, &mut state.backbone)?;
    sgd_step(&mut model.known_head.params, &grads.known_head, &mut state.known_head)?;
    if let Some(g) = &grads.reference_head {
        let (Some(head), Some(st)) = (model.reference_head.as_mut(), state.reference_head.as_mut()) else {
            return Err(Error::Usage("trainer state has no reference head".into()));
        };
        sgd_step(&mut head.params, g, st)?;
    }
    Ok(metrics)
}

/// Endless reshuffled walk over a dataset.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Cycler {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            rng,
        }
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            let m = (k - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + m]);
            self.pos += m;
        }
        out
    }
}

fn check_inputs(
    model: &DualBranchModel,
    known: &Dataset,
    reference: Option<&Dataset>,
    cfg: &TrainingConfig,
) -> Result<()> {
    cfg.validate()?;
    model.validate()?;
    if known.is_empty() {
        return Err(Error::Dataset("known dataset is empty".into()));
    }
    let mode = cfg.mode;
    match (reference, mode.needs_reference()) {
        (Some(_), false) => return Err(Error::Config(format!("mode {mode} does not take a reference dataset"))),
        (None, true) => return Err(Error::Config(format!("mode {mode} needs a reference dataset"))),
        _ => {}
    }
    let input_shape = &model.backbone.spec.input_shape;
    for ds in std::iter::once(known).chain(reference) {
        if let Some(shape) = ds.sample_shape() {
            if shape != input_shape.as_slice() {
                return Err(Error::Dimension(format!(
                    "{}: samples {shape:?}, backbone expects {input_shape:?}",
                    ds.provenance()
                )));
            }
        }
    }
    if model.known_classes != known.num_classes() {
        return Err(Error::Config(format!(
            "model has {} known classes, dataset has {}",
            model.known_classes,
            known.num_classes()
        )));
    }
    let c_ref = reference.map_or(0, Dataset::num_classes);
    match mode {
        TrainingMode::CeOnly | TrainingMode::CeMembership => {
            if model.known_head_outputs()? != model.known_classes {
                return Err(Error::Config("known head width must equal known classes".into()));
            }
        }
        TrainingMode::DualCe | TrainingMode::DualFull => {
            if c_ref == 0 {
                return Err(Error::Config(format!("mode {mode} needs reference classes")));
            }
            if model.reference_classes() != c_ref {
                return Err(Error::Config(format!(
                    "reference head has {} outputs, reference dataset has {c_ref} classes",
                    model.reference_classes()
                )));
            }
        }
        TrainingMode::FinetuneCc => {
            if model.known_head_outputs()? != model.known_classes + c_ref {
                return Err(Error::Config(format!(
                    "joint head needs {} outputs",
                    model.known_classes + c_ref
                )));
            }
        }
    }
    Ok(())
}

/// Trains for `cfg.epochs` epochs over the known set.
pub fn train(
    model: DualBranchModel,
    known: &Dataset,
    reference: Option<&Dataset>,
    cfg: &TrainingConfig,
) -> Result<(DualBranchModel, Vec<EpochMetrics>)> {
    train_observed(model, known, reference, cfg, |_, _| Ok(()))
}

/// [`train`] calling `observer(epoch, model)` after every epoch.
///
/// An epoch is one shuffled pass over the known set in batches of
/// `batch_size_known`; each step pairs it with the next `batch_size_reference`
/// reference samples, reshuffling the reference set whenever it runs out.
/// The joint-head baseline instead trains a single branch on the union of
/// both sets, with reference labels shifted past the known ones.
pub fn train_observed<F>(
    mut model: DualBranchModel,
    known: &Dataset,
    reference: Option<&Dataset>,
    cfg: &TrainingConfig,
    mut observer: F,
) -> Result<(DualBranchModel, Vec<EpochMetrics>)>
where
    F: FnMut(usize, &DualBranchModel) -> Result<()>,
{
    check_inputs(&model, known, reference, cfg)?;
    if cfg.epochs == 0 {
        return Ok((model, Vec::new()));
    }

    let joint;
    let (primary, paired) = match (cfg.mode, reference) {
        (TrainingMode::FinetuneCc, Some(r)) => {
            joint = if r.is_empty() {
                known.clone()
            } else {
                known.union_offset(r)?
            };
            (&joint, None)
        }
        (m, r) if m.has_reference_branch() => (known, r),
        _ => (known, None),
    };

    let mut state = TrainerState::new(&model, cfg)?;
    let mut order: Vec<usize> = (0..primary.len()).collect();
    let mut order_rng = seeded_rng(cfg.seed, STREAM_KNOWN_ORDER);
    let mut cycler = paired.map(|r| Cycler::new(r.len(), seeded_rng(cfg.seed, STREAM_REFERENCE_ORDER)));
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut sum = StepMetrics::default();
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size_known) {
            let (x, y) = primary.batch(chunk)?;
            let ref_batch = match (&mut cycler, paired) {
                (Some(c), Some(r)) => Some(r.batch(&c.take(cfg.batch_size_reference))?),
                _ => None,
            };
            let m = train_step(
                &mut model,
                &mut state,
                LabeledBatch { x: &x, labels: &y },
                ref_batch.as_ref().map(|(rx, ry)| LabeledBatch { x: rx, labels: ry }),
                cfg,
            )?;
            sum.ce_reference += m.ce_reference;
            sum.ce_known += m.ce_known;
            sum.membership_known += m.membership_known;
            sum.cumulative += m.cumulative;
            steps += 1;
        }
        let inv = 1.0 / steps as f64;
        history.push(EpochMetrics {
            epoch: epoch + 1,
            losses: StepMetrics {
                ce_reference: sum.ce_reference * inv,
                ce_known: sum.ce_known * inv,
                membership_known: sum.membership_known * inv,
                cumulative: sum.cumulative * inv,
            },
        });
        observer(epoch + 1, &model)?;
    }
    Ok((model, history))
}
