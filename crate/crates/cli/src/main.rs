use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use novelnet::{cmd_ablate, cmd_calibrate, cmd_eval, cmd_inspect_filters, cmd_train, Options};
use novelnet_core::trainer::TrainingMode;

#[derive(Parser)]
#[command(
    name = "novelnet",
    version,
    about = "Multi-class novelty detection with membership loss"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Checkpoint to write (train) or read (other commands).
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Output directory for reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Training seed; for `ablate`, run this seed only.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// ce-only, ce+membership, dual-ce, dual-full or finetune-cC; for
    /// `ablate`, run this mode only.
    #[arg(long, global = true)]
    mode: Option<TrainingMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the checkpoint and loss history.
    Train,
    /// Score known-test and novel samples; write scores, ROC and summary.
    Eval,
    /// Calibrate the novelty threshold on known validation data.
    Calibrate {
        /// Accepted false-negative rate; overrides the config.
        #[arg(long)]
        target_fnr: Option<f64>,
    },
    /// Run the mode x seed ablation matrix.
    Ablate,
    /// Report positive, negative and globally negative head filters.
    InspectFilters,
}

fn run(cli: Cli) -> novelnet_core::Result<()> {
    let mut opts = Options {
        config: cli.config,
        checkpoint: cli.checkpoint,
        out: cli.out,
        seed: cli.seed,
        mode: cli.mode,
        target_fnr: None,
    };
    match cli.command {
        Command::Train => {
            let out = cmd_train(&opts)?;
            if let Some(last) = out.history.last() {
                println!(
                    "epochs {} cumulative loss {:.6}",
                    out.history.len(),
                    last.losses.cumulative
                );
            }
            println!("checkpoint {}", out.checkpoint.display());
            println!("history {}", out.history_path.display());
        }
        Command::Eval => {
            let out = cmd_eval(&opts)?;
            println!("auc {:.4} accuracy {:.4}", out.summary.auc, out.summary.accuracy);
            println!("summary {}", out.summary_path.display());
        }
        Command::Calibrate { target_fnr } => {
            opts.target_fnr = target_fnr;
            let (path, t) = cmd_calibrate(&opts)?;
            println!(
                "gamma {:?} realized fnr {:.4} over {} samples",
                t.gamma, t.realized_fnr, t.sample_count
            );
            println!("threshold {}", path.display());
        }
        Command::Ablate => {
            let out = cmd_ablate(&opts)?;
            println!("{:<14} {:>8} {:>9} {:>5}", "mode", "auc", "accuracy", "runs");
            for s in &out.summary {
                println!(
                    "{:<14} {:>8.4} {:>9.4} {:>5}",
                    s.mode.name(),
                    s.mean_auc,
                    s.mean_accuracy,
                    s.runs
                );
            }
            println!("table {}", out.table.display());
        }
        Command::InspectFilters => {
            let (path, report) = cmd_inspect_filters(&opts)?;
            println!("globally negative filters {:?}", report.globally_negative);
            println!("report {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
