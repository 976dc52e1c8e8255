//! Novelty scoring by maximum known-head activation, threshold calibration,
//! ROC/AUC, and closed-set accuracy.

mod report;
mod roc;
mod threshold;

pub use report::{read_roc_csv, read_score_csv, write_roc_csv, write_score_csv};
pub use roc::{auc_pairwise_oracle, roc_auc, RocResult};
pub use threshold::{calibrate_threshold, decide, realized_fnr, Decision, NoveltyThreshold};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::trainer::DualBranchModel;

/// Ground truth of an evaluated sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truth {
    Known(usize),
    Novel,
}

impl Truth {
    pub fn is_novel(self) -> bool {
        matches!(self, Truth::Novel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: usize,
    /// Largest known-class activation.
    pub score: f64,
    /// Index of that activation.
    pub predicted_class: usize,
    pub truth: Truth,
}

/// `(max, argmax)` of a non-empty slice; the first index wins ties.
pub fn max_activation(f: &[f64]) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, &v) in f.iter().enumerate() {
        match best {
            Some((b, _)) if v <= b => {}
            _ => best = Some((v, i)),
        }
    }
    best
}

/// Score and prediction from a raw activation vector, looking only at the
/// first `known_classes` entries.
pub fn score_from_logits(sample_id: usize, logits: &[f64], known_classes: usize, truth: Truth) -> Result<ScoreRecord> {
    if known_classes == 0 || known_classes > logits.len() {
        return Err(Error::Dimension(format!(
            "{known_classes} known classes but {} activations",
            logits.len()
        )));
    }
    let (score, predicted_class) = max_activation(&logits[..known_classes]).expect("non-empty");
    Ok(ScoreRecord {
        sample_id,
        score,
        predicted_class,
        truth,
    })
}

/// Scores one input `x` (shaped like one backbone sample) through the
/// backbone and known head only.
pub fn novelty_score(model: &DualBranchModel, sample_id: usize, x: &Tensor, truth: Truth) -> Result<ScoreRecord> {
    let batch = Tensor::stack([x])?;
    let f = model.known_logits(&batch)?;
    score_from_logits(sample_id, f.row(0), model.known_classes, truth)
}

const SCORE_CHUNK: usize = 256;

/// Scores every sample; ids are `first_id + position`. `truth_of` maps a
/// dataset label to its [`Truth`].
pub fn score_dataset<F>(
    model: &DualBranchModel,
    dataset: &Dataset,
    first_id: usize,
    truth_of: F,
) -> Result<Vec<ScoreRecord>>
where
    F: Fn(usize) -> Truth + Sync,
{
    let idx: Vec<usize> = (0..dataset.len()).collect();
    let chunks: Vec<Vec<ScoreRecord>> = idx
        .par_chunks(SCORE_CHUNK)
        .map(|chunk| {
            let (x, y) = dataset.batch(chunk)?;
            let f = model.known_logits(&x)?;
            chunk
                .iter()
                .zip(y)
                .enumerate()
                .map(|(row, (&i, label))| {
                    score_from_logits(first_id + i, f.row(row), model.known_classes, truth_of(label))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Scores of a known test set followed by a novel set.
pub fn score_known_and_novel(model: &DualBranchModel, known: &Dataset, novel: &Dataset) -> Result<Vec<ScoreRecord>> {
    if known.num_classes() != model.known_classes {
        return Err(Error::Protocol(format!(
            "model has {} known classes, evaluation set has {}",
            model.known_classes,
            known.num_classes()
        )));
    }
    let mut records = score_dataset(model, known, 0, Truth::Known)?;
    records.extend(score_dataset(model, novel, known.len(), |_| Truth::Novel)?);
    Ok(records)
}

/// Splits records into `(known scores, novel scores)`.
pub fn partition_scores(records: &[ScoreRecord]) -> (Vec<f64>, Vec<f64>) {
    let mut known = Vec::new();
    let mut novel = Vec::new();
    for r in records {
        match r.truth {
            Truth::Known(_) => known.push(r.score),
            Truth::Novel => novel.push(r.score),
        }
    }
    (known, novel)
}

/// Fraction of records whose predicted class equals the known label.
pub fn accuracy_from_records(records: &[ScoreRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Evaluation("no samples to score".into()));
    }
    let mut correct = 0usize;
    for r in records {
        match r.truth {
            Truth::Known(y) => correct += usize::from(r.predicted_class == y),
            Truth::Novel => {
                return Err(Error::Protocol(format!(
                    "sample {} is novel; closed-set accuracy takes known samples only",
                    r.sample_id
                )))
            }
        }
    }
    Ok(correct as f64 / records.len() as f64)
}

/// Argmax accuracy of the known head on a labelled known-class test set.
pub fn closed_set_accuracy(model: &DualBranchModel, test: &Dataset) -> Result<f64> {
    let c = model.known_classes;
    if let Some(s) = test.samples().iter().find(|s| s.label >= c) {
        return Err(Error::Protocol(format!(
            "label {} is not one of the {c} known classes",
            s.label
        )));
    }
    let records = score_dataset(model, test, 0, Truth::Known)?;
    accuracy_from_records(&records)
}
