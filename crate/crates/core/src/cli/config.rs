use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::linalg::TensorShape;
use crate::nn::{Architecture, ArchitectureBuilder, PlateauConfig, TrainConfig};
use crate::noise::{asymmetric, hierarchical, symmetric, HierarchyGroups, TransitionMatrix};
use crate::sap::{DEFAULT_ALPHA, DEFAULT_N_TRUST, DEFAULT_PATCH_CAP};

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "UNLEARN_SEED";

/// Full description of one experiment, parsed from strict JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub sap: SapSpec,
    #[serde(default)]
    pub retrain: bool,
    #[serde(default)]
    pub finetune: Option<FinetuneSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_train_fraction() -> f64 {
    0.95
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Spiral {
        #[serde(default = "default_spiral_train")]
        n_per_class: usize,
        #[serde(default = "default_spiral_test")]
        test_per_class: usize,
        #[serde(default = "default_spiral_jitter")]
        noise_std: f64,
    },
    Cifar10 {
        train_path: PathBuf,
        test_path: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
        #[serde(default)]
        normalization: Normalization,
    },
}

fn default_spiral_train() -> usize {
    250
}

fn default_spiral_test() -> usize {
    5000
}

fn default_spiral_jitter() -> f64 {
    0.05
}

impl DatasetSpec {
    pub fn input_shape(&self) -> TensorShape {
        match self {
            DatasetSpec::Spiral { .. } => TensorShape::flat(2),
            DatasetSpec::Cifar10 { .. } => TensorShape::new(3, 32, 32),
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DatasetSpec::Spiral { .. } => 2,
            DatasetSpec::Cifar10 { .. } => crate::data::CIFAR_CLASSES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Hidden dense widths; the output layer is appended.
    Mlp {
        hidden: Vec<usize>,
        #[serde(default = "yes")]
        batchnorm: bool,
    },
    /// Explicit layer list; the last layer must produce one output per class.
    Layers { layers: Vec<LayerEntry> },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerEntry {
    Dense {
        units: usize,
    },
    Conv2d {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Batchnorm,
    Relu,
}

fn one() -> usize {
    1
}

impl ModelSpec {
    pub fn architecture(&self, input: TensorShape, classes: usize) -> Result<Architecture> {
        match self {
            ModelSpec::Mlp { hidden, batchnorm } => {
                if hidden.contains(&0) {
                    return Err(Error::validation("hidden widths must be positive"));
                }
                let mut b = ArchitectureBuilder::new(input);
                for &h in hidden {
                    b = b.dense(h);
                    if *batchnorm {
                        b = b.batchnorm();
                    }
                    b = b.relu();
                }
                b.dense(classes).try_finish(classes)
            }
            ModelSpec::Layers { layers } => {
                let mut b = ArchitectureBuilder::new(input);
                for l in layers {
                    b = match *l {
                        LayerEntry::Dense { units } => b.dense(units),
                        LayerEntry::Conv2d {
                            out_channels,
                            kernel,
                            stride,
                            padding,
                        } => b.conv2d(out_channels, kernel, stride, padding),
                        LayerEntry::Batchnorm => b.batchnorm(),
                        LayerEntry::Relu => b.relu(),
                    };
                }
                b.try_finish(classes)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    None,
    Symmetric {
        eta: f64,
    },
    Asymmetric {
        eta: f64,
    },
    /// `groups` lists clusters of mutually confusable classes.
    Hierarchical {
        eta: f64,
        groups: Vec<Vec<usize>>,
    },
}

impl NoiseSpec {
    pub fn eta(&self) -> f64 {
        match *self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Symmetric { eta }
            | NoiseSpec::Asymmetric { eta }
            | NoiseSpec::Hierarchical { eta, .. } => eta,
        }
    }

    pub fn set_eta(&mut self, value: f64) {
        match self {
            NoiseSpec::None => *self = NoiseSpec::Symmetric { eta: value },
            NoiseSpec::Symmetric { eta }
            | NoiseSpec::Asymmetric { eta }
            | NoiseSpec::Hierarchical { eta, .. } => *eta = value,
        }
    }

    pub fn transition(&self, k: usize, seed: u64) -> Result<TransitionMatrix> {
        match self {
            NoiseSpec::None => symmetric(k, 0.0),
            NoiseSpec::Symmetric { eta } => symmetric(k, *eta),
            NoiseSpec::Asymmetric { eta } => asymmetric(k, *eta, seed),
            NoiseSpec::Hierarchical { eta, groups } => {
                hierarchical(k, *eta, &HierarchyGroups::from_clusters(k, groups)?)
            }
        }
    }
}

/// Training hyperparameters. The shuffle seed comes from the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub plateau: Option<PlateauConfig>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            nesterov: d.nesterov,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
            epochs: d.epochs,
            plateau: d.plateau,
        }
    }
}

impl TrainSpec {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            nesterov: self.nesterov,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            plateau: self.plateau,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SapSpec {
    pub alpha: f64,
    pub n_trust: usize,
    pub patch_cap: Option<usize>,
    /// When set, `run` picks the value with the best validation accuracy.
    pub alpha_grid: Option<Vec<f64>>,
}

impl Default for SapSpec {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            n_trust: DEFAULT_N_TRUST,
            patch_cap: Some(DEFAULT_PATCH_CAP),
            alpha_grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSpec {
    /// Fraction of the training split kept as the retain set.
    pub retain_fraction: f64,
    #[serde(default)]
    pub train: TrainSpec,
}

/// Values given on the command line. `None` keeps the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub n_trust: Option<usize>,
    pub patch_cap: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub eta: Option<f64>,
}

impl ExperimentConfig {
    /// Parses and validates. Syntax and schema errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Applies overrides with precedence flag > environment > file.
    pub fn with_overrides(mut self, flags: &Overrides, env_seed: Option<&str>) -> Result<Self> {
        if let Some(s) = env_seed {
            self.seed = s.trim().parse().map_err(|_| {
                Error::validation(format!("{SEED_ENV}={s:?} is not an unsigned integer"))
            })?;
        }
        if let Some(s) = flags.seed {
            self.seed = s;
        }
        if let Some(d) = &flags.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(a) = flags.alpha {
            self.sap.alpha = a;
        }
        if let Some(n) = flags.n_trust {
            self.sap.n_trust = n;
        }
        if let Some(c) = flags.patch_cap {
            self.sap.patch_cap = Some(c);
        }
        if let Some(e) = flags.epochs {
            self.train.epochs = e;
        }
        if let Some(lr) = flags.learning_rate {
            self.train.learning_rate = lr;
        }
        if let Some(eta) = flags.eta {
            self.noise.set_eta(eta);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.noise.eta();
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::validation(format!(
                "noise eta {eta} must lie in [0, 1)"
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::validation(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        check_alpha(self.sap.alpha)?;
        if let Some(grid) = &self.sap.alpha_grid {
            if grid.is_empty() {
                return Err(Error::validation("alpha_grid must not be empty"));
            }
            grid.iter().try_for_each(|&a| check_alpha(a))?;
        }
        if self.sap.n_trust == 0 {
            return Err(Error::validation("n_trust must be at least 1"));
        }
        if self.sap.patch_cap == Some(0) {
            return Err(Error::validation("patch_cap must be at least 1"));
        }
        self.train.config(0).validate()?;
        if let Some(f) = &self.finetune {
            if !(f.retain_fraction > 0.0 && f.retain_fraction <= 1.0) {
                return Err(Error::validation(
                    "finetune.retain_fraction must lie in (0, 1]",
                ));
            }
            f.train.config(0).validate()?;
        }
        if let DatasetSpec::Spiral {
            n_per_class,
            test_per_class,
            noise_std,
        } = self.dataset
        {
            if n_per_class == 0 || test_per_class == 0 {
                return Err(Error::validation("spiral sample counts must be positive"));
            }
            if !(noise_std >= 0.0 && noise_std.is_finite()) {
                return Err(Error::validation(
                    "spiral noise_std must be finite and non-negative",
                ));
            }
        }
        self.model
            .architecture(self.dataset.input_shape(), self.dataset.classes())?;
        Ok(())
    }

    /// Checks that referenced input files exist.
    pub fn check_files(&self) -> Result<()> {
        if let DatasetSpec::Cifar10 {
            train_path,
            test_path,
            ..
        } = &self.dataset
        {
            for p in [train_path, test_path] {
                if !p.is_file() {
                    return Err(Error::validation(format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn architecture(&self) -> Result<Architecture> {
        self.model
            .architecture(self.dataset.input_shape(), self.dataset.classes())
    }

    /// SHA-256 over the canonical JSON serialisation, hex encoded. The output
    /// directory is not part of the digest.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Short identifier shared by every row of a run.
    pub fn run_id(&self) -> String {
        format!("{}-s{}", &self.digest()[..12], self.seed)
    }
}

fn check_alpha(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "alpha {a} must be positive and finite"
        )))
    }
}

/// Independent sub-seed for one stage of a run (SplitMix64 finaliser).
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stage.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
