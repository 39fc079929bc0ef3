use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::pipeline::RunReport;
use crate::data::{load_checkpoint, save_checkpoint, Provenance};
use crate::error::{Error, Result};
use crate::nn::Model;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const VANILLA_CKPT: &str = "vanilla.ckpt";
pub const SAP_CKPT: &str = "sap.ckpt";
pub const RETRAIN_CKPT: &str = "retrain.ckpt";
pub const FINETUNE_CKPT: &str = "finetune.ckpt";

/// Records what a run produced and the config it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub seed: u64,
    pub config_digest: String,
    pub chosen_alpha: Option<f64>,
    /// File name to SHA-256 hex digest.
    pub artifacts: BTreeMap<String, String>,
    pub config: ExperimentConfig,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes rows with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn provenance(cfg: &ExperimentConfig) -> Provenance {
    Provenance {
        seed: cfg.seed,
        config_digest: cfg.digest(),
    }
}

/// Saves a checkpoint into `dir` and returns its path.
pub fn save_model(
    dir: &Path,
    name: &str,
    model: &Model,
    cfg: &ExperimentConfig,
) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(name);
    save_checkpoint(model, &provenance(cfg), &path)?;
    Ok(path)
}

/// Writes checkpoints, `metrics.csv`, and `manifest.json` for a finished run.
pub fn write_run(cfg: &ExperimentConfig, report: &RunReport, dir: &Path) -> Result<Manifest> {
    create_dir(dir)?;
    let mut names = vec![METRICS_FILE, VANILLA_CKPT, SAP_CKPT];
    save_model(dir, VANILLA_CKPT, &report.vanilla, cfg)?;
    save_model(dir, SAP_CKPT, &report.sap.outcome.model, cfg)?;
    if let Some(m) = &report.retrain {
        save_model(dir, RETRAIN_CKPT, m, cfg)?;
        names.push(RETRAIN_CKPT);
    }
    if let Some(m) = &report.finetune {
        save_model(dir, FINETUNE_CKPT, m, cfg)?;
        names.push(FINETUNE_CKPT);
    }
    write_csv(&dir.join(METRICS_FILE), &report.records)?;
    let mut manifest = Manifest {
        run_id: report.run_id.clone(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        chosen_alpha: Some(report.sap.alpha),
        artifacts: BTreeMap::new(),
        config: cfg.clone(),
    };
    for n in names {
        manifest
            .artifacts
            .insert(n.to_owned(), sha256_file(&dir.join(n))?);
    }
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config {
        line: e.line(),
        column: e.column(),
        message: format!("{}: {e}", path.display()),
    })
}

/// Inconsistencies between a manifest, its config, and the files on disk.
/// An empty list means the run directory is consistent.
pub fn verify_run(dir: &Path) -> Result<Vec<String>> {
    let m = read_manifest(dir)?;
    let mut problems = Vec::new();
    if m.config.digest() != m.config_digest {
        problems.push(format!(
            "config digest {} does not match recorded {}",
            m.config.digest(),
            m.config_digest
        ));
    }
    for (name, want) in &m.artifacts {
        let path = dir.join(name);
        if !path.is_file() {
            problems.push(format!("{name} is missing"));
            continue;
        }
        let got = sha256_file(&path)?;
        if &got != want {
            problems.push(format!("{name} hash {got} does not match recorded {want}"));
        }
        if name.ends_with(".ckpt") {
            match load_checkpoint(&path) {
                Ok(c) if c.provenance.config_digest != m.config_digest => problems.push(format!(
                    "{name} was produced by config {}",
                    c.provenance.config_digest
                )),
                Ok(_) => {}
                Err(e) => problems.push(format!("{name}: {e}")),
            }
        }
    }
    Ok(problems)
}

/// The vanilla checkpoint of an earlier run in `dir` when it was trained
/// under the same data, model, noise, and training settings as `cfg`.
pub fn reusable_vanilla(cfg: &ExperimentConfig, dir: &Path) -> Option<Model> {
    let m = read_manifest(dir).ok()?;
    if training_view(&m.config) != training_view(cfg) || !verify_run(dir).ok()?.is_empty() {
        return None;
    }
    load_checkpoint(&dir.join(VANILLA_CKPT))
        .ok()
        .map(|c| c.model)
}

/// The config with every field that does not affect vanilla training reset.
fn training_view(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.sap = Default::default();
    c.retrain = false;
    c.finetune = None;
    c.output_dir = PathBuf::new();
    c
}
