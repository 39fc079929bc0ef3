use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use super::artifacts::{
    read_manifest, reusable_vanilla, save_model, sha256_file, verify_run, write_csv,
    write_manifest, write_run, Manifest, FINETUNE_CKPT, VANILLA_CKPT,
};
use super::config::{ExperimentConfig, Overrides, SEED_ENV};
use super::pipeline::{
    boundary, finetune_record, finetune_stage, load_splits, run_experiment, sweep, train_vanilla,
    DataSource, GridSpec, MetricsRecord, SweepParam,
};
use crate::data::load_checkpoint;
use crate::error::{Error, Result};
use crate::nn::evaluate;

#[derive(Debug, Parser)]
#[command(
    name = "sap",
    version,
    about = "Corrective unlearning by scaled activation projection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corrupt, split, train, apply SAP, and evaluate.
    Run(ConfigArgs),
    /// Apply SAP over a list of α or n_trust values.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_parser = parse_param)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Export predicted classes over a 2-D lattice as CSV.
    Boundary {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        xmin: f64,
        #[arg(long, allow_hyphen_values = true)]
        xmax: f64,
        #[arg(long, allow_hyphen_values = true)]
        ymin: f64,
        #[arg(long, allow_hyphen_values = true)]
        ymax: f64,
        #[arg(long)]
        res: usize,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finetune a checkpoint on a retain subset of the configured training split.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the corrupted training pool as CSV.
    Corrupt(ConfigArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// `spiral:<n>[:<std>[:<seed>]]`, `cifar10:<path>[:<limit>]`, or `csv:<path>`.
        #[arg(long)]
        data: DataSource,
    },
}

fn parse_param(s: &str) -> Result<SweepParam> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n_trust: Option<usize>,
    #[arg(long)]
    pub patch_cap: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let flags = Overrides {
            seed: self.seed,
            output_dir: self.out.clone(),
            alpha: self.alpha,
            n_trust: self.n_trust,
            patch_cap: self.patch_cap,
            epochs: self.epochs,
            learning_rate: self.lr,
            eta: self.eta,
        };
        let env = std::env::var(SEED_ENV).ok();
        ExperimentConfig::load(&self.config)?.with_overrides(&flags, env.as_deref())
    }
}

/// Executes one parsed command.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(args) => cmd_run(&args.resolve()?),
        Command::Sweep {
            config,
            param,
            values,
        } => cmd_sweep(&config.resolve()?, *param, values),
        Command::Boundary {
            ckpt,
            xmin,
            xmax,
            ymin,
            ymax,
            res,
            out,
        } => {
            let grid = GridSpec {
                xmin: *xmin,
                xmax: *xmax,
                ymin: *ymin,
                ymax: *ymax,
                res: *res,
            };
            cmd_boundary(ckpt, &grid, out.as_deref())
        }
        Command::Finetune { ckpt, config } => cmd_finetune(ckpt, &config.resolve()?),
        Command::Corrupt(args) => cmd_corrupt(&args.resolve()?),
        Command::Eval { ckpt, data } => cmd_eval(ckpt, data),
    }
}

fn warn_about(dir: &Path) {
    if let Ok(problems) = verify_run(dir) {
        for p in problems {
            eprintln!("warning: {}: {p}", dir.display());
        }
    }
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<()> {
    let dir = &cfg.output_dir;
    if let Ok(old) = read_manifest(dir) {
        if old.config_digest != cfg.digest() {
            eprintln!(
                "warning: {} held run {} from a different config; replacing it",
                dir.display(),
                old.run_id
            );
        }
    }
    let report = run_experiment(cfg)?;
    write_run(cfg, &report, dir)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "run {}  alpha {}", report.run_id, report.sap.alpha).ok();
    for r in &report.records {
        print_record(&mut out, r);
    }
    Ok(())
}

fn print_record(out: &mut impl Write, r: &MetricsRecord) {
    let stage = serde_json::to_value(r.stage).expect("stage serialises");
    writeln!(
        out,
        "{:<9} train {:.4}  val {:.4}  test {:.4}{}",
        stage.as_str().unwrap_or_default(),
        r.train_accuracy,
        r.val_accuracy,
        r.test_accuracy,
        r.purity
            .map(|p| format!("  purity {p:.4}"))
            .unwrap_or_default()
    )
    .ok();
}

pub fn cmd_sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::validation("sweep needs at least one value"));
    }
    let dir = &cfg.output_dir;
    let splits = load_splits(cfg)?;
    let name = match param {
        SweepParam::Alpha => "sweep_alpha.csv",
        SweepParam::NTrust => "sweep_n_trust.csv",
    };
    let (vanilla, fresh) = match reusable_vanilla(cfg, dir) {
        Some(m) => (m, false),
        None => (train_vanilla(cfg, &splits)?.0, true),
    };
    let rows = sweep(cfg, &vanilla, &splits, param, values)?;
    if fresh {
        save_model(dir, VANILLA_CKPT, &vanilla, cfg)?;
    }
    write_csv(&dir.join(name), &rows)?;
    if fresh {
        let mut artifacts = BTreeMap::new();
        for n in [VANILLA_CKPT, name] {
            artifacts.insert(n.to_owned(), sha256_file(&dir.join(n))?);
        }
        write_manifest(
            dir,
            &Manifest {
                run_id: cfg.run_id(),
                seed: cfg.seed,
                config_digest: cfg.digest(),
                chosen_alpha: None,
                artifacts,
                config: cfg.clone(),
            },
        )?;
    }
    let mut out = std::io::stdout().lock();
    for r in rows {
        writeln!(
            out,
            "{:>12} test {:.4}  val {:.4}",
            r.value, r.test_accuracy, r.val_accuracy
        )
        .ok();
    }
    Ok(())
}

pub fn cmd_boundary(ckpt: &Path, grid: &GridSpec, out: Option<&Path>) -> Result<()> {
    let model = load_checkpoint(ckpt)?.model;
    let points = boundary(&model, grid)?;
    match out {
        Some(path) => write_csv(path, &points),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            for p in &points {
                w.serialize(p)?;
            }
            w.flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

pub fn cmd_finetune(ckpt: &Path, cfg: &ExperimentConfig) -> Result<()> {
    if let Some(parent) = ckpt.parent() {
        warn_about(parent);
    }
    let spec = cfg
        .finetune
        .as_ref()
        .ok_or_else(|| Error::validation("config has no finetune section"))?;
    let model = load_checkpoint(ckpt)?.model;
    let splits = load_splits(cfg)?;
    let t = Instant::now();
    let tuned = finetune_stage(cfg, &model, &splits.train, spec)?;
    let row = finetune_record(cfg, &tuned, &splits, t)?;
    let dir = &cfg.output_dir;
    save_model(dir, FINETUNE_CKPT, &tuned, cfg)?;
    write_csv(
        &dir.join("finetune_metrics.csv"),
        std::slice::from_ref(&row),
    )?;
    print_record(&mut std::io::stdout().lock(), &row);
    Ok(())
}

pub fn cmd_corrupt(cfg: &ExperimentConfig) -> Result<()> {
    let splits = load_splits(cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("corrupted.csv");
    splits.pool.save_csv(&path)?;
    println!(
        "{}: {} samples, observed noise rate {:.4}",
        path.display(),
        splits.pool.len(),
        splits.pool.noise_rate().unwrap_or(0.0)
    );
    Ok(())
}

pub fn cmd_eval(ckpt: &Path, data: &DataSource) -> Result<()> {
    if let Some(parent) = ckpt.parent() {
        warn_about(parent);
    }
    let model = load_checkpoint(ckpt)?.model;
    let e = evaluate(&model, &data.load(model.classes())?)?;
    println!(
        "{}",
        serde_json::to_string(&e).expect("evaluation serialises")
    );
    Ok(())
}
