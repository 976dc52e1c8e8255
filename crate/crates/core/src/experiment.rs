//! End-to-end runs: assemble known/novel/reference data, optionally
//! pretrain on the reference set, train one mode, and measure novelty AUC
//! and closed-set accuracy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_disjoint_classes, split_train_test, synth_gaussian, BenchmarkLayout, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{accuracy_from_records, partition_scores, roc_auc, score_dataset, score_known_and_novel, Truth};
use crate::nn::{Network, NetworkSpec};
use crate::trainer::{train, DualBranchModel, EpochMetrics, TrainingConfig, TrainingMode};

/// Datasets of one experiment, already shaped for the backbone.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub known_train: Dataset,
    pub known_test: Dataset,
    pub novel: Dataset,
    pub reference: Option<Dataset>,
}

impl ExperimentData {
    /// Splits `known` into train/test, reshapes everything to `input_shape`
    /// and rejects reference classes that collide with known ones.
    pub fn assemble(
        known: &Dataset,
        novel: &Dataset,
        reference: Option<&Dataset>,
        split: &SplitSpec,
        input_shape: &[usize],
    ) -> Result<Self> {
        if let Some(r) = reference {
            check_disjoint_classes(known, r)?;
        }
        let (train, test) = split_train_test(known, split)?;
        Ok(Self {
            known_train: train.reshaped(input_shape)?,
            known_test: test.reshaped(input_shape)?,
            novel: novel.reshaped(input_shape)?,
            reference: reference
                .filter(|r| !r.is_empty())
                .map(|r| r.reshaped(input_shape))
                .transpose()?,
        })
    }

    pub fn known_classes(&self) -> usize {
        self.known_train.num_classes()
    }

    pub fn reference_classes(&self) -> usize {
        self.reference.as_ref().map_or(0, Dataset::num_classes)
    }
}

/// Backbone used for the Gaussian benchmark: each `d`-dimensional point is
/// a `[d, 1, 1]` image and both convolutions use 1x1 kernels.
pub fn benchmark_backbone(dimension: usize) -> Result<NetworkSpec> {
    NetworkSpec::conv_backbone([dimension, 1, 1], 32, 32, 1)
}

/// Reference pretraining epochs used by the bundled benchmark.
pub const BENCHMARK_PRETRAIN_EPOCHS: usize = 20;

/// Added to the run seed for reference pretraining so that it never shares
/// a seed with the per-mode runs of the same ablation row.
pub const PRETRAIN_SEED_OFFSET: u64 = 1000;

/// Generates and assembles the Gaussian benchmark. The layout seed also
/// seeds the train/test split.
pub fn benchmark_data(layout: &BenchmarkLayout, backbone: &NetworkSpec) -> Result<ExperimentData> {
    let (known, novel, reference) = synth_gaussian(&layout.to_spec()?)?;
    let split = SplitSpec {
        seed: layout.seed,
        ..SplitSpec::default()
    };
    ExperimentData::assemble(&known, &novel, Some(&reference), &split, &backbone.input_shape)
}

/// Backbone and reference head after plain cross-entropy training on the
/// reference set. Every mode can start from it; the known head always
/// starts fresh.
#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub backbone: Network,
    pub reference_head: Network,
}

/// Trains backbone + reference head on `reference` alone. Optimiser and
/// batch settings come from `base`; the batch size is the reference one.
pub fn pretrain_on_reference(
    backbone: &NetworkSpec,
    reference: &Dataset,
    base: &TrainingConfig,
    epochs: usize,
    seed: u64,
) -> Result<Pretrained> {
    let cfg = TrainingConfig {
        mode: TrainingMode::CeOnly,
        epochs,
        seed,
        batch_size_known: base.batch_size_reference,
        ..base.clone()
    };
    let model = DualBranchModel::build(backbone.clone(), reference.num_classes(), 0, seed)?;
    let (model, _) = train(model, reference, None, &cfg)?;
    Ok(Pretrained {
        backbone: model.backbone,
        reference_head: model.known_head,
    })
}

/// Model for a mode, fresh or starting from `pretrained`.
pub fn build_model(
    mode: TrainingMode,
    backbone: &NetworkSpec,
    known_classes: usize,
    reference_classes: usize,
    seed: u64,
    pretrained: Option<&Pretrained>,
) -> Result<DualBranchModel> {
    let mut model = fresh_model(mode, backbone, known_classes, reference_classes, seed)?;
    if let Some(p) = pretrained {
        if p.backbone.spec != *backbone {
            return Err(Error::Config("pretrained backbone has a different architecture".into()));
        }
        model.backbone = p.backbone.clone();
        if let Some(head) = model.reference_head.as_mut() {
            if head.spec != p.reference_head.spec {
                return Err(Error::Config(format!(
                    "pretrained reference head does not match {reference_classes} reference classes"
                )));
            }
            *head = p.reference_head.clone();
        }
    }
    Ok(model)
}

fn fresh_model(
    mode: TrainingMode,
    backbone: &NetworkSpec,
    known_classes: usize,
    reference_classes: usize,
    seed: u64,
) -> Result<DualBranchModel> {
    match mode {
        TrainingMode::CeOnly | TrainingMode::CeMembership => {
            DualBranchModel::build(backbone.clone(), known_classes, 0, seed)
        }
        TrainingMode::DualCe | TrainingMode::DualFull => {
            if reference_classes == 0 {
                return Err(Error::Config(format!("mode {mode} needs reference data")));
            }
            DualBranchModel::build(backbone.clone(), known_classes, reference_classes, seed)
        }
        TrainingMode::FinetuneCc => {
            DualBranchModel::build_joint(backbone.clone(), known_classes, reference_classes, seed)
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: DualBranchModel,
    pub history: Vec<EpochMetrics>,
    pub auc: f64,
    pub accuracy: f64,
}

/// AUC of known-test versus novel scores, and known-test accuracy.
pub fn evaluate(model: &DualBranchModel, data: &ExperimentData) -> Result<(f64, f64)> {
    let records = score_known_and_novel(model, &data.known_test, &data.novel)?;
    let (known, novel) = partition_scores(&records);
    let auc = roc_auc(&known, &novel)?.auc;
    let known_only = score_dataset(model, &data.known_test, 0, Truth::Known)?;
    Ok((auc, accuracy_from_records(&known_only)?))
}

/// Builds, trains and evaluates one mode.
pub fn run_mode(
    data: &ExperimentData,
    backbone: &NetworkSpec,
    cfg: &TrainingConfig,
    pretrained: Option<&Pretrained>,
) -> Result<RunOutcome> {
    let reference = if cfg.mode.needs_reference() {
        Some(
            data.reference
                .as_ref()
                .ok_or_else(|| Error::Config(format!("mode {} needs reference data", cfg.mode)))?,
        )
    } else {
        None
    };
    let model = build_model(
        cfg.mode,
        backbone,
        data.known_classes(),
        data.reference_classes(),
        cfg.seed,
        pretrained,
    )?;
    let (model, history) = train(model, &data.known_train, reference, cfg)?;
    let (auc, accuracy) = evaluate(&model, data)?;
    Ok(RunOutcome {
        model,
        history,
        auc,
        accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: TrainingMode,
    pub seed: u64,
    pub auc: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: TrainingMode,
    pub mean_auc: f64,
    pub mean_accuracy: f64,
    pub runs: usize,
}

/// Runs every `(seed, mode)` pair. `data_for` builds the data shared by all
/// modes of one seed; each mode trains with `seed + mode index`. With
/// `pretrain_epochs > 0` every mode of a seed starts from the same
/// reference-pretrained backbone. Rows come back ordered by seed, then by
/// the order of `modes`.
pub fn run_ablation<F>(
    seeds: &[u64],
    modes: &[TrainingMode],
    backbone: &NetworkSpec,
    base: &TrainingConfig,
    pretrain_epochs: usize,
    data_for: F,
) -> Result<Vec<AblationRow>>
where
    F: Fn(u64) -> Result<ExperimentData> + Sync,
{
    let needs_reference = pretrain_epochs > 0 || modes.iter().any(|m| m.needs_reference());
    if needs_reference {
        // surface the configuration error before spending time on training
        let probe = data_for(*seeds.first().ok_or_else(|| Error::Config("no seeds".into()))?)?;
        if probe.reference.is_none() {
            return Err(Error::Config("ablation needs reference data".into()));
        }
    }
    let per_seed: Vec<Vec<AblationRow>> = seeds
        .par_iter()
        .map(|&seed| {
            let data = data_for(seed)?;
            let pretrained = match (&data.reference, pretrain_epochs) {
                (Some(r), n) if n > 0 => Some(pretrain_on_reference(
                    backbone,
                    r,
                    base,
                    n,
                    seed + PRETRAIN_SEED_OFFSET,
                )?),
                (None, n) if n > 0 => return Err(Error::Config("pretraining needs reference data".into())),
                _ => None,
            };
            modes
                .par_iter()
                .map(|&mode| {
                    let cfg = TrainingConfig {
                        mode,
                        seed: seed + mode.index() as u64,
                        ..base.clone()
                    };
                    let out = run_mode(&data, backbone, &cfg, pretrained.as_ref())?;
                    Ok(AblationRow {
                        mode,
                        seed,
                        auc: out.auc,
                        accuracy: out.accuracy,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Per-mode means, in the order modes first appear in `rows`.
pub fn summarize(rows: &[AblationRow]) -> Vec<ModeSummary> {
    let mut out: Vec<ModeSummary> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|s| s.mode == r.mode) {
            Some(s) => {
                s.mean_auc += r.auc;
                s.mean_accuracy += r.accuracy;
                s.runs += 1;
            }
            None => out.push(ModeSummary {
                mode: r.mode,
                mean_auc: r.auc,
                mean_accuracy: r.accuracy,
                runs: 1,
            }),
        }
    }
    for s in &mut out {
        s.mean_auc /= s.runs as f64;
        s.mean_accuracy /= s.runs as f64;
    }
    out
}
