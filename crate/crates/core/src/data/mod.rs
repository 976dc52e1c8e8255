//! Labeled datasets, file loaders, the synthetic Gaussian benchmark, and the
//! known/novel and train/test split protocol.

mod idx;
mod split;
mod synthetic;
mod table;

pub use idx::{load_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use split::{split_known_novel, split_train_test, SplitSpec};
pub use synthetic::{synth_gaussian, BenchmarkLayout, ClusterRole, ClusterSpec, SyntheticSpec};
pub use table::{load_csv, write_csv};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Tensor,
    pub label: usize,
}

/// Samples with dense labels `0..class_names.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    class_names: Vec<String>,
    provenance: String,
}

impl Dataset {
    /// Validates that labels are dense, every class is populated and all
    /// samples share a shape.
    pub fn new(samples: Vec<Sample>, class_names: Vec<String>, provenance: impl Into<String>) -> Result<Self> {
        let k = class_names.len();
        if samples.is_empty() != (k == 0) {
            return Err(Error::Dataset(format!("{} samples but {k} classes", samples.len())));
        }
        let mut counts = vec![0usize; k];
        for s in &samples {
            if s.label >= k {
                return Err(Error::Label(format!("label {} outside [0, {k})", s.label)));
            }
            counts[s.label] += 1;
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Dataset(format!("class `{}` has no samples", class_names[i])));
        }
        if let Some(first) = samples.first() {
            if let Some(bad) = samples.iter().find(|s| s.x.shape() != first.x.shape()) {
                return Err(Error::Dimension(format!(
                    "sample shape {:?} differs from {:?}",
                    bad.x.shape(),
                    first.x.shape()
                )));
            }
        }
        let mut sorted = class_names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != k {
            return Err(Error::Dataset("duplicate class names".into()));
        }
        Ok(Self {
            samples,
            class_names,
            provenance: provenance.into(),
        })
    }

    /// Dataset with no classes and no samples.
    pub fn empty(provenance: impl Into<String>) -> Self {
        Self {
            samples: Vec::new(),
            class_names: Vec::new(),
            provenance: provenance.into(),
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn sample_shape(&self) -> Option<&[usize]> {
        self.samples.first().map(|s| s.x.shape())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Sample indices grouped by label.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes()];
        for (i, s) in self.samples.iter().enumerate() {
            groups[s.label].push(i);
        }
        groups
    }

    /// Stacked inputs and labels for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let x = Tensor::stack(indices.iter().map(|&i| &self.samples[i].x))?;
        let y = indices.iter().map(|&i| self.samples[i].label).collect();
        Ok((x, y))
    }

    /// All samples as one batch.
    pub fn full_batch(&self) -> Result<(Tensor, Vec<usize>)> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(&all)
    }

    /// Same data with every sample reshaped (element count must match).
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(Sample {
                    x: s.x.clone().reshape(shape.to_vec())?,
                    label: s.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            samples,
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        })
    }

    /// Appends `other` with its labels shifted past this dataset's classes.
    pub fn union_offset(&self, other: &Dataset) -> Result<Self> {
        let offset = self.num_classes();
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().map(|s| Sample {
            x: s.x.clone(),
            label: s.label + offset,
        }));
        let mut names = self.class_names.clone();
        names.extend(other.class_names.iter().cloned());
        Dataset::new(samples, names, format!("{} + {}", self.provenance, other.provenance))
    }
}

/// Rejects a reference set that shares any class name with the known set.
pub fn check_disjoint_classes(known: &Dataset, reference: &Dataset) -> Result<()> {
    if let Some(name) = reference.class_names().iter().find(|n| known.class_names().contains(n)) {
        return Err(Error::Protocol(format!(
            "reference class `{name}` is also a known class"
        )));
    }
    Ok(())
}
