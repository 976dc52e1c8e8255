use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::nn::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// Fraction of classes (after sorting by name) treated as known.
    pub known_fraction: f64,
    /// Fraction of each known class used for training.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            known_fraction: 0.5,
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("known_fraction", self.known_fraction),
            ("train_fraction", self.train_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} {v} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Sorts class names by bytes and sends the first
/// `floor(known_fraction * K)` classes to the known set, the rest to the
/// novel set. Labels are re-densified in sorted order; sample order is kept.
pub fn split_known_novel(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let k = dataset.num_classes();
    if k < 2 {
        return Err(Error::Protocol(format!(
            "known/novel split needs at least 2 classes, got {k}"
        )));
    }
    let n_known = (spec.known_fraction * k as f64).floor() as usize;
    if n_known == 0 || n_known == k {
        return Err(Error::Protocol(format!(
            "known fraction {} of {k} classes leaves an empty side",
            spec.known_fraction
        )));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        dataset.class_names()[a]
            .as_bytes()
            .cmp(dataset.class_names()[b].as_bytes())
    });
    // old label -> (is_known, new label)
    let mut remap = vec![(false, 0); k];
    for (rank, &old) in order.iter().enumerate() {
        remap[old] = if rank < n_known {
            (true, rank)
        } else {
            (false, rank - n_known)
        };
    }
    let names = |range: std::ops::Range<usize>| -> Vec<String> {
        order[range].iter().map(|&i| dataset.class_names()[i].clone()).collect()
    };

    let (mut known, mut novel) = (Vec::new(), Vec::new());
    for s in dataset.samples() {
        let (is_known, label) = remap[s.label];
        let sample = Sample { x: s.x.clone(), label };
        if is_known {
            known.push(sample);
        } else {
            novel.push(sample);
        }
    }
    Ok((
        Dataset::new(known, names(0..n_known), format!("{} [known]", dataset.provenance()))?,
        Dataset::new(novel, names(n_known..k), format!("{} [novel]", dataset.provenance()))?,
    ))
}

/// Per-class random split. Each class sends `ceil(train_fraction * n)`
/// samples (clamped to `[1, n-1]`) to train and the rest to test, so an odd
/// class under an even split gives the extra sample to train.
pub fn split_train_test(known: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed, 7);
    let mut in_train = vec![false; known.len()];
    for (class, mut idx) in known.indices_by_class().into_iter().enumerate() {
        let n = idx.len();
        if n < 2 {
            return Err(Error::Protocol(format!(
                "class `{}` has {n} sample(s); train/test split needs 2",
                known.class_names()[class]
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((spec.train_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (s, &t) in known.samples().iter().zip(&in_train) {
        if t {
            train.push(s.clone());
        } else {
            test.push(s.clone());
        }
    }
    let names = known.class_names().to_vec();
    Ok((
        Dataset::new(train, names.clone(), format!("{} [train]", known.provenance()))?,
        Dataset::new(test, names, format!("{} [test]", known.provenance()))?,
    ))
}
