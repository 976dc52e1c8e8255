use std::path::{Path, PathBuf};
use std::process::Command;

use novelnet::{
    calibrate_model, cmd_ablate, cmd_calibrate, cmd_eval, cmd_inspect_filters, cmd_train, evaluate_model,
    inspect_model, ExperimentConfig, Options,
};
use novelnet_core::data::{write_csv, Dataset, Sample};
use novelnet_core::eval::{auc_pairwise_oracle, read_roc_csv, read_score_csv, Truth};
use novelnet_core::experiment::build_model;
use novelnet_core::nn::{LayerSpec, Network, NetworkSpec, ParamSet};
use novelnet_core::trainer::{load_checkpoint, save_checkpoint, Checkpoint, DualBranchModel, TrainingMode};
use novelnet_core::{Error, Tensor};
use serde_json::{json, Value};

const BACKBONE: &str = r#"{
    "input_shape": [4, 1, 1],
    "layers": [
        { "kind": "conv2d", "in_channels": 4, "filters": 6, "kernel": 1, "stride": 1 },
        { "kind": "relu" },
        { "kind": "conv2d", "in_channels": 6, "filters": 6, "kernel": 1, "stride": 1 },
        { "kind": "relu" },
        { "kind": "global-average-pool" }
    ]
}"#;

fn tiny_config(epochs: usize, mode: &str) -> Value {
    json!({
        "dataset": {
            "source": {
                "kind": "benchmark",
                "layout": {
                    "dimension": 4, "known_clusters": 2, "novel_clusters": 2, "reference_clusters": 3,
                    "samples_per_cluster": 40, "seed": 5
                }
            },
            "split": { "seed": 5 }
        },
        "model": { "backbone": serde_json::from_str::<Value>(BACKBONE).unwrap() },
        "training": { "mode": mode, "epochs": epochs, "batch_size_known": 16, "batch_size_reference": 16, "seed": 3 },
        "evaluation": { "seeds": [0, 1] }
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn opts(config: &Path, out: &Path) -> Options {
    Options {
        config: Some(config.to_path_buf()),
        out: Some(out.to_path_buf()),
        ..Options::default()
    }
}

fn network(spec: NetworkSpec, params: &[(&str, Vec<usize>, Vec<f64>)]) -> Network {
    let mut p = ParamSet::new();
    for (k, shape, v) in params {
        p.insert(*k, Tensor::new(shape.clone(), v.clone()).unwrap());
    }
    Network::new(spec, p).unwrap()
}

/// Scalar inputs, identity backbone, two-class head that copies the input:
/// every novelty score equals the input value.
fn identity_model() -> DualBranchModel {
    let backbone = network(
        NetworkSpec::dense_head(1, 1),
        &[("0.weight", vec![1, 1], vec![1.0]), ("0.bias", vec![1], vec![0.0])],
    );
    let head = network(
        NetworkSpec::dense_head(1, 2),
        &[
            ("0.weight", vec![2, 1], vec![1.0, 1.0]),
            ("0.bias", vec![2], vec![0.0, 0.0]),
        ],
    );
    DualBranchModel {
        backbone,
        known_head: head,
        reference_head: None,
        known_classes: 2,
    }
}

fn scalars(values: &[f64], classes: usize) -> Dataset {
    let samples = values
        .iter()
        .enumerate()
        .map(|(i, &v)| Sample {
            x: Tensor::vector(vec![v]),
            label: i % classes,
        })
        .collect();
    Dataset::new(samples, (0..classes).map(|c| format!("c{c}")).collect(), "scalars").unwrap()
}

#[test]
fn zero_epochs_checkpoint_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &tiny_config(0, "dual-full"));
    let out = cmd_train(&opts(&cfg, dir.path())).unwrap();
    assert!(out.history.is_empty());
    let ckpt = load_checkpoint(&out.checkpoint).unwrap();
    let spec: NetworkSpec = serde_json::from_str(BACKBONE).unwrap();
    let init = build_model(TrainingMode::DualFull, &spec, 2, 3, 3, None).unwrap();
    assert_eq!(ckpt.model, init);
    assert_eq!(ckpt.epoch, 0);
    let history = std::fs::read_to_string(&out.history_path).unwrap();
    assert_eq!(
        history.trim(),
        "epoch,ce_reference,ce_known,membership_known,cumulative"
    );
}

#[test]
fn rerun_gives_identical_checkpoint_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &tiny_config(3, "dual-full"));
    let a = cmd_train(&Options {
        checkpoint: Some(dir.path().join("a.ckpt")),
        ..opts(&cfg, dir.path())
    })
    .unwrap();
    let b = cmd_train(&Options {
        checkpoint: Some(dir.path().join("b.ckpt")),
        ..opts(&cfg, dir.path())
    })
    .unwrap();
    assert_eq!(
        std::fs::read(a.checkpoint).unwrap(),
        std::fs::read(b.checkpoint).unwrap()
    );
    assert_eq!(a.history.len(), 3);
}

#[test]
fn seed_and_mode_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &tiny_config(1, "dual-full"));
    let out = cmd_train(&Options {
        seed: Some(9),
        mode: Some(TrainingMode::CeOnly),
        ..opts(&cfg, dir.path())
    })
    .unwrap();
    let ckpt = load_checkpoint(&out.checkpoint).unwrap();
    let c = ckpt.config.unwrap();
    assert_eq!((c.seed, c.mode), (9, TrainingMode::CeOnly));
    assert!(ckpt.model.reference_head.is_none());
}

#[test]
fn missing_dataset_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(1, "ce-only");
    cfg["dataset"]["source"] = json!({ "kind": "split", "data": { "format": "csv", "path": "absent.csv" } });
    let path = write_config(dir.path(), "c.json", &cfg);
    let err = cmd_train(&opts(&path, dir.path())).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("absent.csv"), "{err}");
}

#[test]
fn binary_reports_one_line_and_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(1, "ce-only");
    cfg["dataset"]["source"] = json!({ "kind": "split", "data": { "format": "csv", "path": "absent.csv" } });
    let path = write_config(dir.path(), "c.json", &cfg);
    let out = Command::new(env!("CARGO_BIN_EXE_novelnet"))
        .args(["train", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.contains("absent.csv"));
    assert!(!dir.path().join("model.ckpt").exists());
}

#[test]
fn binary_runs_train_eval_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &tiny_config(2, "dual-full"));
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_novelnet"))
            .args(args)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    run(&["train"]);
    assert!(run(&["eval"]).starts_with("auc "));
    assert!(run(&["calibrate", "--target-fnr", "0.1"]).starts_with("gamma "));
    run(&["inspect-filters"]);
    for f in [
        "model.ckpt",
        "history.csv",
        "scores.csv",
        "roc.csv",
        "summary.json",
        "threshold.json",
        "filters.json",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn summary_auc_matches_the_emitted_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &tiny_config(3, "dual-full"));
    let o = opts(&cfg, dir.path());
    cmd_train(&o).unwrap();
    let out = cmd_eval(&o).unwrap();

    let records = read_score_csv(&out.scores).unwrap();
    let known: Vec<f64> = records
        .iter()
        .filter(|r| !r.truth.is_novel())
        .map(|r| r.score)
        .collect();
    let novel: Vec<f64> = records.iter().filter(|r| r.truth.is_novel()).map(|r| r.score).collect();
    let oracle = auc_pairwise_oracle(&known, &novel).unwrap();
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(&out.summary_path).unwrap()).unwrap();
    assert_eq!(summary["auc"].as_f64().unwrap(), (oracle * 1e4).round() / 1e4);
    assert!((read_roc_csv(&out.roc).unwrap().auc - oracle).abs() < 1e-12);

    let correct = records
        .iter()
        .filter(|r| matches!(r.truth, Truth::Known(y) if y == r.predicted_class))
        .count();
    assert_eq!(
        summary["accuracy"].as_f64().unwrap(),
        correct as f64 / known.len() as f64
    );
    assert_eq!(summary["known_samples"], 40);
    assert_eq!(summary["novel_samples"], 80);
}

#[test]
fn separable_scores_give_unit_auc() {
    let m = identity_model();
    let known = scalars(&[5.0, 6.0, 7.5, 9.0], 2);
    let novel = scalars(&[-1.0, 0.0, 4.9], 1);
    let report = evaluate_model(&m, &known, &novel).unwrap();
    assert_eq!(report.summary.auc, 1.0);
    assert_eq!(report.summary.accuracy, 0.5);
}

#[test]
fn no_novel_samples_is_a_protocol_error() {
    let m = identity_model();
    let known = scalars(&[1.0, 2.0], 2);
    let err = evaluate_model(&m, &known, &Dataset::empty("none")).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)));
}

#[test]
fn class_mismatch_fails_without_writing_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &tiny_config(1, "dual-full"));
    let ckpt = Checkpoint {
        model: DualBranchModel::build(serde_json::from_str(BACKBONE).unwrap(), 3, 0, 1).unwrap(),
        config: None,
        epoch: 0,
        metrics: None,
    };
    let path = dir.path().join("three.ckpt");
    save_checkpoint(&ckpt, &path).unwrap();
    let err = cmd_eval(&Options {
        checkpoint: Some(path),
        ..opts(&cfg, dir.path())
    })
    .unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    for f in ["scores.csv", "roc.csv", "summary.json"] {
        assert!(!dir.path().join(f).exists());
    }
}

#[test]
fn calibration_order_statistics() {
    let m = identity_model();
    let values: Vec<f64> = (1..=100).map(f64::from).collect();
    let validation = scalars(&values, 2);
    let t = calibrate_model(&m, &validation, 0.05).unwrap();
    assert_eq!((t.gamma, t.realized_fnr, t.sample_count), (5.0, 0.04, 100));
    let t = calibrate_model(&m, &validation, 0.5).unwrap();
    assert_eq!((t.gamma, t.realized_fnr), (50.0, 0.49));
    let err = calibrate_model(&m, &Dataset::empty("none"), 0.05).unwrap_err();
    assert!(matches!(err, Error::Calibration(_)));
}

#[test]
fn calibrate_rejects_invalid_target() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &tiny_config(1, "dual-full"));
    cmd_train(&opts(&cfg, dir.path())).unwrap();
    let err = cmd_calibrate(&Options {
        target_fnr: Some(1.5),
        ..opts(&cfg, dir.path())
    })
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let (path, t) = cmd_calibrate(&opts(&cfg, dir.path())).unwrap();
    assert!(t.realized_fnr <= 0.05);
    let back: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(back["gamma"].as_f64().unwrap(), t.gamma);
    assert_eq!(back["quantile"].as_f64().unwrap(), 0.05);
}

#[test]
fn ablation_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &tiny_config(2, "dual-full"));
    let one = cmd_ablate(&Options {
        seed: Some(4),
        mode: Some(TrainingMode::CeMembership),
        ..opts(&cfg, dir.path())
    })
    .unwrap();
    assert_eq!(one.rows.len(), 1);
    assert_eq!((one.rows[0].mode, one.rows[0].seed), (TrainingMode::CeMembership, 4));

    let all = cmd_ablate(&opts(&cfg, dir.path())).unwrap();
    assert_eq!(all.rows.len(), 4 * 2);
    let table = std::fs::read_to_string(&all.table).unwrap();
    assert_eq!(table.lines().count(), 1 + 8);
    assert_eq!(table.lines().next().unwrap(), "mode,seed,auc,accuracy");
    assert_eq!(
        std::fs::read_to_string(&all.summary_path).unwrap().lines().count(),
        1 + 4
    );
    assert!(all.summary.iter().all(|s| s.runs == 2));
}

#[test]
fn ablation_without_reference_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(1, "ce-only");
    cfg["dataset"]["source"]["layout"]["reference_clusters"] = json!(0);
    let path = write_config(dir.path(), "c.json", &cfg);
    let err = cmd_ablate(&opts(&path, dir.path())).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    // single-branch modes alone do not need it
    let ok = cmd_ablate(&Options {
        mode: Some(TrainingMode::CeOnly),
        seed: Some(0),
        ..opts(&path, dir.path())
    })
    .unwrap();
    assert_eq!(ok.rows.len(), 1);
}

#[test]
fn hand_built_head_gives_hand_computed_sign_sets() {
    let dir = tempfile::tempdir().unwrap();
    let backbone = Network::new(
        NetworkSpec::new(vec![3, 1, 1], vec![LayerSpec::GlobalAveragePool]).unwrap(),
        ParamSet::new(),
    )
    .unwrap();
    let head = network(
        NetworkSpec::dense_head(3, 2),
        &[
            ("0.weight", vec![2, 3], vec![1.0, -2.0, 0.0, -1.0, -3.0, 4.0]),
            ("0.bias", vec![2], vec![0.0, 0.0]),
        ],
    );
    let model = DualBranchModel {
        backbone,
        known_head: head,
        reference_head: None,
        known_classes: 2,
    };
    let path = dir.path().join("hand.ckpt");
    save_checkpoint(
        &Checkpoint {
            model,
            config: None,
            epoch: 0,
            metrics: None,
        },
        &path,
    )
    .unwrap();
    let (out, report) = cmd_inspect_filters(&Options {
        checkpoint: Some(path),
        out: Some(dir.path().to_path_buf()),
        ..Options::default()
    })
    .unwrap();
    assert_eq!(report.classes[0].positive, [0]);
    assert_eq!(report.classes[0].negative, [1]);
    assert_eq!(report.classes[1].positive, [2]);
    assert_eq!(report.classes[1].negative, [0, 1]);
    assert_eq!(report.globally_negative, [1]);
    let json: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(json["globally_negative"], json!([1]));
}

#[test]
fn head_without_pooling_is_unsupported() {
    let err = inspect_model(&identity_model()).unwrap_err();
    assert!(matches!(err, Error::UnsupportedArchitecture(_)));
}

/// Checks the report against its documented shape: `classes` with disjoint
/// in-range `positive`/`negative` index lists, `globally_negative` equal to
/// their intersection, and a `weights` matrix of matching size.
fn check_report_schema(v: &Value, classes: usize, filters: usize) {
    let obj = v.as_object().expect("object");
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["classes", "globally_negative", "weights"]);
    let indices = |x: &Value| -> Vec<usize> {
        x.as_array()
            .expect("array")
            .iter()
            .map(|i| {
                let i = i.as_u64().expect("index") as usize;
                assert!(i < filters);
                i
            })
            .collect()
    };
    let list = v["classes"].as_array().expect("classes");
    assert_eq!(list.len(), classes);
    let mut global: Option<Vec<usize>> = None;
    for (c, entry) in list.iter().enumerate() {
        assert_eq!(entry["class"].as_u64(), Some(c as u64));
        let (pos, neg) = (indices(&entry["positive"]), indices(&entry["negative"]));
        assert!(pos.iter().all(|p| !neg.contains(p)));
        global = Some(match global {
            None => neg,
            Some(g) => g.into_iter().filter(|j| neg.contains(j)).collect(),
        });
    }
    assert_eq!(indices(&v["globally_negative"]), global.unwrap());
    let w = v["weights"].as_array().expect("weights");
    assert_eq!(w.len(), classes);
    assert!(w.iter().all(|row| row.as_array().map(Vec::len) == Some(filters)));
}

#[test]
fn trained_report_follows_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &tiny_config(5, "dual-full"));
    let o = opts(&cfg, dir.path());
    cmd_train(&o).unwrap();
    let (path, report) = cmd_inspect_filters(&o).unwrap();
    assert!(report
        .classes
        .iter()
        .any(|c| !c.positive.is_empty() || !c.negative.is_empty()));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    check_report_schema(&v, 2, 6);
}

#[test]
fn csv_split_source_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let means = [("ant", 3.0), ("bee", -3.0), ("cat", 0.0), ("dog", 9.0)];
    let mut samples = Vec::new();
    for (label, (_, m)) in means.iter().enumerate() {
        for i in 0..20 {
            let jitter = (i as f64 * 0.37).sin();
            samples.push(Sample {
                x: Tensor::vector(vec![m + jitter, m - jitter, *m, jitter]),
                label,
            });
        }
    }
    let names = means.iter().map(|(n, _)| n.to_string()).collect();
    write_csv(
        &Dataset::new(samples, names, "mem").unwrap(),
        &dir.path().join("all.csv"),
    )
    .unwrap();

    let mut cfg = tiny_config(3, "ce+membership");
    cfg["dataset"]["source"] = json!({ "kind": "split", "data": { "format": "csv", "path": "all.csv" } });
    let path = write_config(dir.path(), "c.json", &cfg);
    let loaded = ExperimentConfig::load(&path).unwrap();
    let data = loaded.experiment_data(None).unwrap();
    assert_eq!(data.known_train.class_names(), ["ant", "bee"]);
    assert_eq!(data.novel.class_names(), ["cat", "dog"]);
    assert!(data.reference.is_none());

    let o = opts(&path, dir.path());
    cmd_train(&o).unwrap();
    let out = cmd_eval(&o).unwrap();
    assert_eq!(out.summary.known_samples, 20);
    assert_eq!(out.summary.novel_samples, 40);

    cfg["training"]["mode"] = json!("dual-ce");
    let dual = write_config(dir.path(), "dual.json", &cfg);
    assert!(matches!(ExperimentConfig::load(&dual), Err(Error::Config(_))));
}

#[test]
fn bundled_benchmark_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json");
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.evaluation.seeds, (0..10).collect::<Vec<_>>());
    assert_eq!(cfg.model.pretrain_epochs, 20);
    let data = cfg.experiment_data(Some(0)).unwrap();
    assert_eq!(data.known_classes(), 4);
    assert_eq!(data.novel.num_classes(), 4);
    assert_eq!(data.reference_classes(), 8);
    assert_eq!(data.known_train.len() + data.known_test.len(), 800);
}
