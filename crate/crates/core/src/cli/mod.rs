//! Experiment orchestration behind the `sap` binary: config parsing,
//! pipelines, sweeps, boundary export, and run artifacts.

mod artifacts;
mod commands;
mod config;
mod pipeline;

use std::process::ExitCode;

use clap::Parser;

pub use artifacts::{
    read_csv, read_manifest, reusable_vanilla, sha256_file, verify_run, write_csv, write_run,
    Manifest, FINETUNE_CKPT, MANIFEST_FILE, METRICS_FILE, RETRAIN_CKPT, SAP_CKPT, VANILLA_CKPT,
};
pub use commands::{
    cmd_boundary, cmd_corrupt, cmd_eval, cmd_finetune, cmd_run, cmd_sweep, execute, Cli, Command,
    ConfigArgs,
};
pub use config::{
    stage_seed, DatasetSpec, ExperimentConfig, FinetuneSpec, LayerEntry, ModelSpec, NoiseSpec,
    Overrides, SapSpec, TrainSpec, SEED_ENV,
};
pub use pipeline::{
    boundary, finetune_record, finetune_stage, load_splits, retain_indices, run_experiment,
    sap_stage, score, select_alpha, streams, sweep, train_retrain, train_vanilla, BoundaryPoint,
    DataSource, GridSpec, MetricsRecord, RunReport, SapSelection, SplitScores, Splits, Stage,
    SweepParam, SweepRow,
};

/// Parses `std::env::args` and runs the command.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
