//! JSON experiment configuration with `dataset`, `model`, `training` and
//! `evaluation` sections.

use std::path::{Path, PathBuf};

use novelnet_core::data::{
    load_csv, load_idx, split_known_novel, synth_gaussian, BenchmarkLayout, Dataset, SplitSpec, SyntheticSpec,
};
use novelnet_core::experiment::ExperimentData;
use novelnet_core::nn::NetworkSpec;
use novelnet_core::trainer::TrainingConfig;
use novelnet_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: DataSource,
    #[serde(default)]
    pub split: SplitSpec,
    /// Known-class samples for threshold calibration. Defaults to the known
    /// training split.
    #[serde(default)]
    pub validation: Option<DataFile>,
}

/// Where known, novel and reference samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    /// Generated Gaussian benchmark. Ablation runs regenerate it per seed.
    Benchmark {
        #[serde(default)]
        layout: BenchmarkLayout,
    },
    /// Explicit Gaussian clusters.
    Synthetic { spec: SyntheticSpec },
    /// One labelled file; classes are split into known and novel by name.
    Split {
        data: DataFile,
        #[serde(default)]
        reference: Option<DataFile>,
    },
    /// Separate known and novel files.
    Separate {
        known: DataFile,
        novel: DataFile,
        #[serde(default)]
        reference: Option<DataFile>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum DataFile {
    Csv { path: PathBuf },
    Idx { images: PathBuf, labels: PathBuf },
}

impl DataFile {
    fn paths(&self) -> Vec<&Path> {
        match self {
            DataFile::Csv { path } => vec![path],
            DataFile::Idx { images, labels } => vec![images, labels],
        }
    }

    fn resolve(&mut self, base: &Path) {
        match self {
            DataFile::Csv { path } => *path = base.join(&*path),
            DataFile::Idx { images, labels } => {
                *images = base.join(&*images);
                *labels = base.join(&*labels);
            }
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataFile::Csv { path } => load_csv(path),
            DataFile::Idx { images, labels } => load_idx(images, labels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub backbone: NetworkSpec,
    /// Epochs of cross-entropy training on the reference set before the
    /// configured mode starts. Zero trains from scratch.
    #[serde(default)]
    pub pretrain_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub target_fnr: f64,
    /// Seeds of the ablation matrix.
    pub seeds: Vec<u64>,
    pub scores: PathBuf,
    pub roc: PathBuf,
    pub summary: PathBuf,
    pub threshold: PathBuf,
    pub filters: PathBuf,
    pub history: PathBuf,
    pub checkpoint: PathBuf,
    pub ablation: PathBuf,
    pub ablation_summary: PathBuf,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            target_fnr: 0.05,
            seeds: vec![0],
            scores: "scores.csv".into(),
            roc: "roc.csv".into(),
            summary: "summary.json".into(),
            threshold: "threshold.json".into(),
            filters: "filters.json".into(),
            history: "history.csv".into(),
            checkpoint: "model.ckpt".into(),
            ablation: "ablation.csv".into(),
            ablation_summary: "ablation_summary.csv".into(),
        }
    }
}

impl ExperimentConfig {
    /// Reads and validates a config. Relative data paths are resolved
    /// against the config file's directory and must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn files_mut(&mut self) -> Vec<&mut DataFile> {
        let mut out: Vec<&mut DataFile> = Vec::new();
        match &mut self.dataset.source {
            DataSource::Split { data, reference } => {
                out.push(data);
                out.extend(reference.as_mut());
            }
            DataSource::Separate {
                known,
                novel,
                reference,
            } => {
                out.push(known);
                out.push(novel);
                out.extend(reference.as_mut());
            }
            DataSource::Benchmark { .. } | DataSource::Synthetic { .. } => {}
        }
        out.extend(self.dataset.validation.as_mut());
        out
    }

    fn resolve_paths(&mut self, base: &Path) {
        for f in self.files_mut() {
            f.resolve(base);
        }
    }

    pub fn validate(&mut self) -> Result<()> {
        for f in self.files_mut() {
            for p in f.paths() {
                if !p.is_file() {
                    return Err(Error::Io {
                        path: p.to_path_buf(),
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                    });
                }
            }
        }
        self.dataset.split.validate()?;
        self.model.backbone.validate()?;
        self.training.validate()?;
        let e = &self.evaluation;
        if !(e.target_fnr > 0.0 && e.target_fnr < 1.0) {
            return Err(Error::Config(format!("target_fnr {} outside (0, 1)", e.target_fnr)));
        }
        if e.seeds.is_empty() {
            return Err(Error::Config("evaluation.seeds is empty".into()));
        }
        if self.training.mode.needs_reference() && !self.has_reference() {
            return Err(Error::Config(format!(
                "mode {} needs reference data",
                self.training.mode
            )));
        }
        if self.model.pretrain_epochs > 0 && !self.has_reference() {
            return Err(Error::Config("pretrain_epochs > 0 needs reference data".into()));
        }
        Ok(())
    }

    pub fn has_reference(&self) -> bool {
        match &self.dataset.source {
            DataSource::Benchmark { layout } => layout.reference_clusters > 0,
            DataSource::Synthetic { spec } => spec
                .clusters
                .iter()
                .any(|c| c.role == novelnet_core::data::ClusterRole::Reference),
            DataSource::Split { reference, .. } | DataSource::Separate { reference, .. } => reference.is_some(),
        }
    }

    /// Loads or generates the experiment data. For generated sources `seed`
    /// replaces the generator and split seeds; file sources use the
    /// configured split as is.
    pub fn experiment_data(&self, seed: Option<u64>) -> Result<ExperimentData> {
        let mut split = self.dataset.split.clone();
        let (known, novel, reference) = match &self.dataset.source {
            DataSource::Benchmark { layout } => {
                let mut layout = layout.clone();
                if let Some(s) = seed {
                    layout.seed = s;
                    split.seed = s;
                }
                synth_gaussian(&layout.to_spec()?)?
            }
            DataSource::Synthetic { spec } => {
                let mut spec = spec.clone();
                if let Some(s) = seed {
                    spec.seed = s;
                    split.seed = s;
                }
                synth_gaussian(&spec)?
            }
            DataSource::Split { data, reference } => {
                let (k, n) = split_known_novel(&data.load()?, &split)?;
                (k, n, load_optional(reference.as_ref())?)
            }
            DataSource::Separate {
                known,
                novel,
                reference,
            } => (known.load()?, novel.load()?, load_optional(reference.as_ref())?),
        };
        let reference = (!reference.is_empty()).then_some(&reference);
        ExperimentData::assemble(&known, &novel, reference, &split, &self.model.backbone.input_shape)
    }

    /// Known-class samples used to calibrate the novelty threshold.
    pub fn validation_data(&self, data: &ExperimentData) -> Result<Dataset> {
        match &self.dataset.validation {
            Some(f) => f.load()?.reshaped(&self.model.backbone.input_shape),
            None => Ok(data.known_train.clone()),
        }
    }
}

fn load_optional(file: Option<&DataFile>) -> Result<Dataset> {
    match file {
        Some(f) => f.load(),
        None => Ok(Dataset::empty("none")),
    }
}
