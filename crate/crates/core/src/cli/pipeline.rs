use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{stage_seed, DatasetSpec, ExperimentConfig, FinetuneSpec};
use crate::data::{load_cifar10, spiral, split, LabeledDataset, Normalization};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    evaluate, finetune, per_sample_losses, predict, train, Evaluation, Model, TrainHistory,
};
use crate::noise::corrupt;
use crate::sap::{apply_cached, prepare, select_lowest, SapOutcome, SpectralCache};

/// Sub-seed streams derived from the experiment seed.
pub mod streams {
    pub const TRAIN_DATA: u64 = 1;
    pub const TEST_DATA: u64 = 2;
    pub const TRANSITION: u64 = 3;
    pub const CORRUPTION: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const INIT: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const RETAIN: u64 = 8;
    pub const FINETUNE: u64 = 9;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Vanilla,
    Retrain,
    Finetune,
    Sap,
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub stage: Stage,
    pub alpha: Option<f64>,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub purity: Option<f64>,
    pub wall_time_s: f64,
}

/// Corrupted train/validation parts and the clean test set.
#[derive(Debug, Clone)]
pub struct Splits {
    /// Corrupted pool before the split.
    pub pool: LabeledDataset,
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

/// Loads or generates data, corrupts the pool, then splits it.
pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    cfg.check_files()?;
    let seed = cfg.seed;
    let (pool, test) = match &cfg.dataset {
        DatasetSpec::Spiral {
            n_per_class,
            test_per_class,
            noise_std,
        } => (
            spiral(
                *n_per_class,
                *noise_std,
                stage_seed(seed, streams::TRAIN_DATA),
            )?,
            spiral(
                *test_per_class,
                *noise_std,
                stage_seed(seed, streams::TEST_DATA),
            )?,
        ),
        DatasetSpec::Cifar10 {
            train_path,
            test_path,
            train_limit,
            test_limit,
            normalization,
        } => (
            load_cifar10(train_path, normalization, *train_limit)?,
            load_cifar10(test_path, normalization, *test_limit)?,
        ),
    };
    let t = cfg
        .noise
        .transition(pool.classes(), stage_seed(seed, streams::TRANSITION))?;
    let pool = corrupt(&pool, &t, stage_seed(seed, streams::CORRUPTION))?;
    let (train, val) = split(&pool, cfg.train_fraction, stage_seed(seed, streams::SPLIT))?;
    Ok(Splits {
        pool,
        train,
        val,
        test,
    })
}

/// Evaluation of one model on all three parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitScores {
    pub train: Evaluation,
    pub val: Evaluation,
    pub test: Evaluation,
}

pub fn score(model: &Model, splits: &Splits) -> Result<SplitScores> {
    Ok(SplitScores {
        train: evaluate(model, &splits.train)?,
        val: evaluate(model, &splits.val)?,
        test: evaluate(model, &splits.test)?,
    })
}

fn record(
    run_id: &str,
    stage: Stage,
    scores: &SplitScores,
    alpha: Option<f64>,
    purity: Option<f64>,
    started: Instant,
) -> MetricsRecord {
    MetricsRecord {
        run_id: run_id.to_owned(),
        stage,
        alpha,
        train_accuracy: scores.train.accuracy,
        train_loss: scores.train.loss,
        val_accuracy: scores.val.accuracy,
        val_loss: scores.val.loss,
        test_accuracy: scores.test.accuracy,
        test_loss: scores.test.loss,
        purity,
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}

/// Trains from the seeded initialisation on the (corrupted) training part.
pub fn train_vanilla(cfg: &ExperimentConfig, splits: &Splits) -> Result<(Model, TrainHistory)> {
    let init = Model::init(&cfg.architecture()?, stage_seed(cfg.seed, streams::INIT))?;
    train(
        &init,
        &splits.train,
        &cfg.train.config(stage_seed(cfg.seed, streams::SHUFFLE)),
    )
}

/// Retrains from the same initialisation on the clean partition only.
pub fn train_retrain(cfg: &ExperimentConfig, splits: &Splits) -> Result<Model> {
    let clean = splits
        .train
        .clean_indices()
        .ok_or_else(|| Error::validation("retrain needs true labels"))?;
    if clean.is_empty() {
        return Err(Error::validation("training split has no clean samples"));
    }
    let init = Model::init(&cfg.architecture()?, stage_seed(cfg.seed, streams::INIT))?;
    let (m, _) = train(
        &init,
        &splits.train.subset(&clean),
        &cfg.train.config(stage_seed(cfg.seed, streams::SHUFFLE)),
    )?;
    Ok(m)
}

/// A random sample of the clean partition when true labels exist, otherwise
/// the lowest-loss samples under `model`. Indices are returned ascending.
pub fn retain_indices(
    model: &Model,
    train: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut idx = match train.clean_indices() {
        Some(mut clean) => {
            let n = ((clean.len() as f64 * fraction).round() as usize).min(clean.len());
            clean.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            clean.truncate(n.max(usize::from(!clean.is_empty())));
            clean
        }
        None => {
            let n = ((train.len() as f64 * fraction).round() as usize).max(1);
            select_lowest(&per_sample_losses(model, train)?, n)?.indices
        }
    };
    if idx.is_empty() {
        return Err(Error::validation("retain set is empty"));
    }
    idx.sort_unstable();
    Ok(idx)
}

/// The finetune baseline on a retain set drawn from the training part.
pub fn finetune_stage(
    cfg: &ExperimentConfig,
    model: &Model,
    train: &LabeledDataset,
    spec: &FinetuneSpec,
) -> Result<Model> {
    let idx = retain_indices(
        model,
        train,
        spec.retain_fraction,
        stage_seed(cfg.seed, streams::RETAIN),
    )?;
    finetune(
        model,
        &train.subset(&idx),
        &spec.train.config(stage_seed(cfg.seed, streams::FINETUNE)),
    )
}

/// SAP over `cfg.sap`, choosing α by validation accuracy when a grid is given.
#[derive(Debug, Clone)]
pub struct SapSelection {
    pub alpha: f64,
    pub outcome: SapOutcome,
    /// `(α, validation accuracy)` for every candidate, in grid order.
    pub candidates: Vec<(f64, f64)>,
}

pub fn sap_stage(cfg: &ExperimentConfig, model: &Model, splits: &Splits) -> Result<SapSelection> {
    let cache = prepare(model, &splits.train, cfg.sap.n_trust, cfg.sap.patch_cap)?;
    select_alpha(
        model,
        &cache,
        &splits.val,
        &cfg.sap.alpha_grid.clone().unwrap_or(vec![cfg.sap.alpha]),
    )
}

/// Best validation accuracy over `grid`. Accuracy ties go to the lower
/// validation loss, then to the earlier value.
pub fn select_alpha(
    model: &Model,
    cache: &SpectralCache,
    val: &LabeledDataset,
    grid: &[f64],
) -> Result<SapSelection> {
    let mut best: Option<(f64, Evaluation, SapOutcome)> = None;
    let mut candidates = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let outcome = apply_cached(model, cache, alpha)?;
        let e = evaluate(&outcome.model, val)?;
        candidates.push((alpha, e.accuracy));
        let better = best.as_ref().is_none_or(|(_, b, _)| {
            e.accuracy > b.accuracy || (e.accuracy == b.accuracy && e.loss < b.loss)
        });
        if better {
            best = Some((alpha, e, outcome));
        }
    }
    let (alpha, _, outcome) = best.ok_or_else(|| Error::validation("empty alpha grid"))?;
    Ok(SapSelection {
        alpha,
        outcome,
        candidates,
    })
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub run_id: String,
    pub records: Vec<MetricsRecord>,
    pub vanilla: Model,
    pub history: TrainHistory,
    pub retrain: Option<Model>,
    pub finetune: Option<Model>,
    pub sap: SapSelection,
}

impl RunReport {
    pub fn record(&self, stage: Stage) -> Option<&MetricsRecord> {
        self.records.iter().find(|r| r.stage == stage)
    }
}

/// Corrupt, split, train, optional baselines, SAP, and evaluation.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let run_id = cfg.run_id();
    let splits = load_splits(cfg)?;
    let mut records = Vec::new();

    let t = Instant::now();
    let (vanilla, history) = train_vanilla(cfg, &splits)?;
    records.push(record(
        &run_id,
        Stage::Vanilla,
        &score(&vanilla, &splits)?,
        None,
        None,
        t,
    ));

    let retrain = if cfg.retrain {
        let t = Instant::now();
        let m = train_retrain(cfg, &splits)?;
        records.push(record(
            &run_id,
            Stage::Retrain,
            &score(&m, &splits)?,
            None,
            None,
            t,
        ));
        Some(m)
    } else {
        None
    };

    let finetuned = match &cfg.finetune {
        Some(spec) => {
            let t = Instant::now();
            let m = finetune_stage(cfg, &vanilla, &splits.train, spec)?;
            records.push(record(
                &run_id,
                Stage::Finetune,
                &score(&m, &splits)?,
                None,
                None,
                t,
            ));
            Some(m)
        }
        None => None,
    };

    let t = Instant::now();
    let sap = sap_stage(cfg, &vanilla, &splits)?;
    let purity = sap.outcome.trusted.purity(&splits.train);
    records.push(record(
        &run_id,
        Stage::Sap,
        &score(&sap.outcome.model, &splits)?,
        Some(sap.alpha),
        purity,
        t,
    ));

    Ok(RunReport {
        run_id,
        records,
        vanilla,
        history,
        retrain,
        finetune: finetuned,
        sap,
    })
}

/// Builds a finetune metrics row for a standalone finetune run.
pub fn finetune_record(
    cfg: &ExperimentConfig,
    model: &Model,
    splits: &Splits,
    started: Instant,
) -> Result<MetricsRecord> {
    Ok(record(
        &cfg.run_id(),
        Stage::Finetune,
        &score(model, splits)?,
        None,
        None,
        started,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    NTrust,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "n_trust" | "n-trust" => Ok(SweepParam::NTrust),
            _ => Err(Error::validation(format!("unknown sweep parameter {s:?}"))),
        }
    }
}

/// One row of a sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub alpha: f64,
    pub n_trust: usize,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub purity: Option<f64>,
}

fn sweep_row(value: f64, alpha: f64, outcome: &SapOutcome, splits: &Splits) -> Result<SweepRow> {
    let s = score(&outcome.model, splits)?;
    Ok(SweepRow {
        value,
        alpha,
        n_trust: outcome.trusted.len(),
        train_accuracy: s.train.accuracy,
        train_loss: s.train.loss,
        val_accuracy: s.val.accuracy,
        val_loss: s.val.loss,
        test_accuracy: s.test.accuracy,
        test_loss: s.test.loss,
        purity: outcome.trusted.purity(&splits.train),
    })
}

/// Applies SAP once per value. An α sweep decomposes the representations
/// once and reuses them; an `n_trust` sweep decomposes per value.
pub fn sweep(
    cfg: &ExperimentConfig,
    model: &Model,
    splits: &Splits,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::validation("sweep needs at least one value"));
    }
    match param {
        SweepParam::Alpha => {
            let cache = prepare(model, &splits.train, cfg.sap.n_trust, cfg.sap.patch_cap)?;
            values
                .iter()
                .map(|&a| sweep_row(a, a, &apply_cached(model, &cache, a)?, splits))
                .collect()
        }
        SweepParam::NTrust => values
            .iter()
            .map(|&v| {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(Error::validation(format!(
                        "n_trust {v} must be a positive integer"
                    )));
                }
                let cache = prepare(model, &splits.train, v as usize, cfg.sap.patch_cap)?;
                sweep_row(
                    v,
                    cfg.sap.alpha,
                    &apply_cached(model, &cache, cfg.sap.alpha)?,
                    splits,
                )
            })
            .collect(),
    }
}

/// Rectangular lattice over `[xmin, xmax] × [ymin, ymax]` with `res` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub res: usize,
}

fn lattice(min: f64, max: f64, i: usize, res: usize) -> f64 {
    if res == 1 || i == 0 {
        min
    } else if i == res - 1 {
        max
    } else {
        min + (max - min) * (i as f64 / (res - 1) as f64)
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.xmin, self.xmax, self.ymin, self.ymax]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.xmin > self.xmax || self.ymin > self.ymax {
            return Err(Error::validation(
                "grid bounds must be finite with min ≤ max",
            ));
        }
        if self.res == 0 {
            return Err(Error::validation("grid resolution must be at least 1"));
        }
        Ok(())
    }

    /// Lattice points, y outer and x inner.
    pub fn points(&self) -> Result<Matrix> {
        self.validate()?;
        let n = self.res;
        Matrix::new(
            n * n,
            2,
            (0..n)
                .flat_map(|yi| {
                    (0..n).flat_map(move |xi| {
                        [
                            lattice(self.xmin, self.xmax, xi, n),
                            lattice(self.ymin, self.ymax, yi, n),
                        ]
                    })
                })
                .collect(),
        )
    }
}

/// One grid cell of a decision-boundary export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub y: f64,
    pub class: usize,
}

/// Predicted class at every lattice point of `grid`.
pub fn boundary(model: &Model, grid: &GridSpec) -> Result<Vec<BoundaryPoint>> {
    if model.input_shape().len() != 2 {
        return Err(Error::validation(format!(
            "decision boundaries need a 2-D input model, this one takes {} features",
            model.input_shape().len()
        )));
    }
    let pts = grid.points()?;
    let classes = predict(model, &pts)?;
    Ok(classes
        .into_iter()
        .enumerate()
        .map(|(i, class)| BoundaryPoint {
            x: pts.get(i, 0),
            y: pts.get(i, 1),
            class,
        })
        .collect())
}

/// Where `eval` should read samples from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// `spiral:<n_per_class>[:<noise_std>[:<seed>]]`
    Spiral {
        n_per_class: usize,
        noise_std: f64,
        seed: u64,
    },
    /// `cifar10:<path>[:<limit>]`
    Cifar10 { path: PathBuf, limit: Option<usize> },
    /// `csv:<path>` in the dataset export layout.
    Csv { path: PathBuf },
}

impl std::str::FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |what: &str| Error::validation(format!("data spec {s:?}: {what}"));
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| bad("expected <kind>:<args>"))?;
        match kind {
            "spiral" => {
                let mut parts = rest.split(':');
                let n_per_class = parts
                    .next()
                    .and_then(|p| p.parse().ok())
                    .ok_or_else(|| bad("bad sample count"))?;
                let noise_std = match parts.next() {
                    Some(p) => p.parse().map_err(|_| bad("bad noise_std"))?,
                    None => 0.05,
                };
                let seed = match parts.next() {
                    Some(p) => p.parse().map_err(|_| bad("bad seed"))?,
                    None => 0,
                };
                if parts.next().is_some() {
                    return Err(bad("too many fields"));
                }
                Ok(DataSource::Spiral {
                    n_per_class,
                    noise_std,
                    seed,
                })
            }
            "cifar10" => {
                let (path, limit) = match rest.rsplit_once(':') {
                    Some((p, l)) if l.parse::<usize>().is_ok() => (p, Some(l.parse().unwrap())),
                    _ => (rest, None),
                };
                Ok(DataSource::Cifar10 {
                    path: path.into(),
                    limit,
                })
            }
            "csv" => Ok(DataSource::Csv { path: rest.into() }),
            _ => Err(bad("kind must be spiral, cifar10, or csv")),
        }
    }
}

impl DataSource {
    pub fn load(&self, classes: usize) -> Result<LabeledDataset> {
        match self {
            DataSource::Spiral {
                n_per_class,
                noise_std,
                seed,
            } => spiral(*n_per_class, *noise_std, *seed),
            DataSource::Cifar10 { path, limit } => {
                load_cifar10(path, &Normalization::default(), *limit)
            }
            DataSource::Csv { path } => LabeledDataset::load_csv(path, classes),
        }
    }
}
