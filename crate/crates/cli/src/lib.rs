//! Command implementations behind the `novelnet` binary: train, evaluate,
//! calibrate, ablate and inspect filters, all driven by one JSON
//! experiment config.

pub mod commands;
pub mod config;

pub use commands::{
    calibrate_model, cmd_ablate, cmd_calibrate, cmd_eval, cmd_inspect_filters, cmd_train, evaluate_model,
    inspect_model, AblationOutput, EvalOutput, EvalReport, EvalSummary, Options, TrainOutput,
};
pub use config::{DataFile, DataSource, DatasetSection, EvaluationSection, ExperimentConfig, ModelSection};
