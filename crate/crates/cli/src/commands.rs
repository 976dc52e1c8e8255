use std::path::{Path, PathBuf};

use novelnet_core::data::Dataset;
use novelnet_core::eval::{
    calibrate_threshold, partition_scores, roc_auc, score_dataset, score_known_and_novel, write_roc_csv,
    write_score_csv, NoveltyThreshold, RocResult, ScoreRecord, Truth,
};
use novelnet_core::experiment::{
    build_model, pretrain_on_reference, run_ablation, summarize, AblationRow, ModeSummary, PRETRAIN_SEED_OFFSET,
};
use novelnet_core::filters::{filter_report, FilterReport};
use novelnet_core::fsutil::write_atomic;
use novelnet_core::nn::LayerSpec;
use novelnet_core::trainer::{
    load_checkpoint, save_checkpoint, train, Checkpoint, DualBranchModel, EpochMetrics, TrainingMode,
};
use novelnet_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<TrainingMode>,
    pub target_fnr: Option<f64>,
}

impl Options {
    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(dir)
    }

    /// Loads the config with `--seed`, `--mode` and `--target-fnr` applied.
    fn load_config(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Error::Usage("--config is required".into()))?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.training.seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.training.mode = mode;
        }
        if let Some(t) = self.target_fnr {
            cfg.evaluation.target_fnr = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn checkpoint_path(&self, cfg: Option<&ExperimentConfig>, out: &Path) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| {
            let name = cfg.map_or_else(|| PathBuf::from("model.ckpt"), |c| c.evaluation.checkpoint.clone());
            out.join(name)
        })
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub const HISTORY_HEADER: &str = "epoch,ce_reference,ce_known,membership_known,cumulative";

pub fn history_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for h in history {
        let l = &h.losses;
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?}\n",
            h.epoch, l.ce_reference, l.ce_known, l.membership_known, l.cumulative
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub history_path: PathBuf,
    pub history: Vec<EpochMetrics>,
}

/// Trains the configured mode and writes the checkpoint and the per-epoch
/// loss history.
pub fn cmd_train(opts: &Options) -> Result<TrainOutput> {
    let cfg = opts.load_config()?;
    let data = cfg.experiment_data(None)?;
    let t = &cfg.training;
    let backbone = &cfg.model.backbone;
    let pretrained = match (&data.reference, cfg.model.pretrain_epochs) {
        (_, 0) => None,
        (Some(r), n) => Some(pretrain_on_reference(backbone, r, t, n, t.seed + PRETRAIN_SEED_OFFSET)?),
        (None, _) => return Err(Error::Config("pretraining needs reference data".into())),
    };
    let model = build_model(
        t.mode,
        backbone,
        data.known_classes(),
        data.reference_classes(),
        t.seed,
        pretrained.as_ref(),
    )?;
    let reference = if t.mode.needs_reference() {
        data.reference.as_ref()
    } else {
        None
    };
    let (model, history) = train(model, &data.known_train, reference, t)?;

    let out = opts.out_dir()?;
    let checkpoint = opts.checkpoint_path(Some(&cfg), &out);
    let history_path = out.join(&cfg.evaluation.history);
    let ckpt = Checkpoint {
        model,
        config: Some(t.clone()),
        epoch: history.len(),
        metrics: history.last().copied(),
    };
    save_checkpoint(&ckpt, &checkpoint)?;
    write_atomic(&history_path, history_csv(&history).as_bytes())?;
    Ok(TrainOutput {
        checkpoint,
        history_path,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Rounded to 4 decimal places.
    pub auc: f64,
    pub accuracy: f64,
    pub known_samples: usize,
    pub novel_samples: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub records: Vec<ScoreRecord>,
    pub roc: RocResult,
    pub summary: EvalSummary,
}

pub fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Scores known-test and novel samples, computes the ROC curve and the
/// closed-set accuracy on the known samples.
pub fn evaluate_model(model: &DualBranchModel, known_test: &Dataset, novel: &Dataset) -> Result<EvalReport> {
    if novel.is_empty() {
        return Err(Error::Protocol("no novel samples; AUC is undefined".into()));
    }
    if known_test.is_empty() {
        return Err(Error::Protocol("no known test samples".into()));
    }
    let records = score_known_and_novel(model, known_test, novel)?;
    let (known, novel_scores) = partition_scores(&records);
    let roc = roc_auc(&known, &novel_scores)?;
    let known_records = &records[..known.len()];
    let correct = known_records
        .iter()
        .filter(|r| matches!(r.truth, Truth::Known(y) if y == r.predicted_class))
        .count();
    let summary = EvalSummary {
        auc: round4(roc.auc),
        accuracy: correct as f64 / known.len() as f64,
        known_samples: known.len(),
        novel_samples: novel_scores.len(),
    };
    Ok(EvalReport { records, roc, summary })
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub scores: PathBuf,
    pub roc: PathBuf,
    pub summary_path: PathBuf,
    pub summary: EvalSummary,
}

/// Evaluates a checkpoint on the configured known-test and novel sets.
/// Nothing is written unless every step succeeds.
pub fn cmd_eval(opts: &Options) -> Result<EvalOutput> {
    let cfg = opts.load_config()?;
    let out = opts.out_dir()?;
    let ckpt = load_checkpoint(&opts.checkpoint_path(Some(&cfg), &out))?;
    let data = cfg.experiment_data(None)?;
    let report = evaluate_model(&ckpt.model, &data.known_test, &data.novel)?;

    let e = &cfg.evaluation;
    let (scores, roc, summary_path) = (out.join(&e.scores), out.join(&e.roc), out.join(&e.summary));
    write_score_csv(&report.records, &scores)?;
    write_roc_csv(&report.roc, &roc)?;
    write_json(&report.summary, &summary_path)?;
    Ok(EvalOutput {
        scores,
        roc,
        summary_path,
        summary: report.summary,
    })
}

/// Sets the novelty threshold from known-class validation scores.
pub fn calibrate_model(model: &DualBranchModel, validation: &Dataset, target_fnr: f64) -> Result<NoveltyThreshold> {
    if !validation.is_empty() && validation.num_classes() != model.known_classes {
        return Err(Error::Protocol(format!(
            "model has {} known classes, validation set has {}",
            model.known_classes,
            validation.num_classes()
        )));
    }
    let records = score_dataset(model, validation, 0, Truth::Known)?;
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    calibrate_threshold(&scores, target_fnr)
}

pub fn cmd_calibrate(opts: &Options) -> Result<(PathBuf, NoveltyThreshold)> {
    let cfg = opts.load_config()?;
    let out = opts.out_dir()?;
    let ckpt = load_checkpoint(&opts.checkpoint_path(Some(&cfg), &out))?;
    let validation = cfg.validation_data(&cfg.experiment_data(None)?)?;
    let threshold = calibrate_model(&ckpt.model, &validation, cfg.evaluation.target_fnr)?;
    let path = out.join(&cfg.evaluation.threshold);
    write_json(&threshold, &path)?;
    Ok((path, threshold))
}

#[derive(Debug, Clone)]
pub struct AblationOutput {
    pub rows: Vec<AblationRow>,
    pub summary: Vec<ModeSummary>,
    pub table: PathBuf,
    pub summary_path: PathBuf,
}

pub const ABLATION_HEADER: &str = "mode,seed,auc,accuracy";
pub const ABLATION_SUMMARY_HEADER: &str = "mode,mean_auc,mean_accuracy,runs";

/// Runs every mode (or only `--mode`) for every configured seed (or only
/// `--seed`). Modes of one seed share data and split; each trains with
/// `seed + mode index`.
pub fn cmd_ablate(opts: &Options) -> Result<AblationOutput> {
    let path = opts
        .config
        .as_ref()
        .ok_or_else(|| Error::Usage("--config is required".into()))?;
    // --seed and --mode select rows here instead of overriding training
    let cfg = ExperimentConfig::load(path)?;
    let seeds = opts.seed.map_or_else(|| cfg.evaluation.seeds.clone(), |s| vec![s]);
    let modes = opts.mode.map_or_else(|| TrainingMode::ABLATION.to_vec(), |m| vec![m]);
    let needs_reference = cfg.model.pretrain_epochs > 0 || modes.iter().any(|m| m.needs_reference());
    if needs_reference && !cfg.has_reference() {
        return Err(Error::Config("ablation modes need reference data".into()));
    }
    let rows = run_ablation(
        &seeds,
        &modes,
        &cfg.model.backbone,
        &cfg.training,
        cfg.model.pretrain_epochs,
        |s| cfg.experiment_data(Some(s)),
    )?;
    let summary = summarize(&rows);

    let mut table = format!("{ABLATION_HEADER}\n");
    for r in &rows {
        table.push_str(&format!("{},{},{:?},{:?}\n", r.mode, r.seed, r.auc, r.accuracy));
    }
    let mut means = format!("{ABLATION_SUMMARY_HEADER}\n");
    for s in &summary {
        means.push_str(&format!(
            "{},{:.4},{:.4},{}\n",
            s.mode, s.mean_auc, s.mean_accuracy, s.runs
        ));
    }
    let out = opts.out_dir()?;
    let (table_path, summary_path) = (
        out.join(&cfg.evaluation.ablation),
        out.join(&cfg.evaluation.ablation_summary),
    );
    write_atomic(&table_path, table.as_bytes())?;
    write_atomic(&summary_path, means.as_bytes())?;
    Ok(AblationOutput {
        rows,
        summary,
        table: table_path,
        summary_path,
    })
}

/// Filter sign report of the known head. Requires a backbone ending in
/// global average pooling and a single dense layer as known head.
pub fn inspect_model(model: &DualBranchModel) -> Result<FilterReport> {
    if !model.backbone.spec.ends_with_global_pool() {
        return Err(Error::UnsupportedArchitecture(
            "backbone does not end in global average pooling".into(),
        ));
    }
    if !matches!(model.known_head.spec.layers[..], [LayerSpec::Dense { .. }]) {
        return Err(Error::UnsupportedArchitecture(
            "known head is not a single dense layer".into(),
        ));
    }
    filter_report(model.known_head_weights()?)
}

pub fn cmd_inspect_filters(opts: &Options) -> Result<(PathBuf, FilterReport)> {
    let cfg = match &opts.config {
        Some(p) => Some(ExperimentConfig::load(p)?),
        None => None,
    };
    let out = opts.out_dir()?;
    let ckpt = load_checkpoint(&opts.checkpoint_path(cfg.as_ref(), &out))?;
    let report = inspect_model(&ckpt.model)?;
    let name = cfg.map_or_else(|| PathBuf::from("filters.json"), |c| c.evaluation.filters);
    let path = out.join(name);
    write_json(&report, &path)?;
    Ok((path, report))
}
