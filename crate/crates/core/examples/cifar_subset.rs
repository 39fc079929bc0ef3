//! Small CNN on a CIFAR-10-format subset with 25% symmetric label noise,
//! before and after SAP.
//!
//! Pass a directory holding `data_batch_1.bin` and `test_batch.bin` to use the
//! real batches; otherwise synthetic textured images in the same binary layout
//! are written to a temporary directory.
//!
//! ```text
//! cargo run --release --example cifar_subset [-- /path/to/cifar-10-batches-bin]
//! ```

use std::path::PathBuf;

use sap_unlearn::cli::{load_splits, sap_stage, score, train_vanilla, ExperimentConfig};
use sap_unlearn::data::synthetic_cifar10;

fn config(train: &str, test: &str) -> String {
    format!(
        r#"{{
  "seed": 1,
  "dataset": {{"kind": "cifar10", "train_path": "{train}", "test_path": "{test}",
              "train_limit": 4000, "test_limit": 1000,
              "normalization": {{"mean": [0.5, 0.5, 0.5], "std": [0.25, 0.25, 0.25]}}}},
  "model": {{"kind": "layers", "layers": [
    {{"kind": "conv2d", "out_channels": 8, "kernel": 3, "stride": 2, "padding": 1}},
    {{"kind": "batchnorm"}}, {{"kind": "relu"}},
    {{"kind": "conv2d", "out_channels": 16, "kernel": 3, "stride": 2, "padding": 1}},
    {{"kind": "batchnorm"}}, {{"kind": "relu"}},
    {{"kind": "dense", "units": 10}}]}},
  "noise": {{"kind": "symmetric", "eta": 0.25}},
  "train": {{"learning_rate": 0.05, "momentum": 0.9, "nesterov": false, "weight_decay": 0.0005,
            "batch_size": 128, "epochs": 30, "plateau": null}},
  "sap": {{"alpha": 30000, "n_trust": 1000, "patch_cap": 64,
          "alpha_grid": [100, 1000, 3000, 10000, 30000, 100000, 300000, 1000000]}}
}}"#
    )
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp;
    let (train, test) = match std::env::args().nth(1) {
        Some(dir) => {
            let dir = PathBuf::from(dir);
            (dir.join("data_batch_1.bin"), dir.join("test_batch.bin"))
        }
        None => {
            tmp = std::env::temp_dir().join(format!("sap-cifar-{}", std::process::id()));
            std::fs::create_dir_all(&tmp)?;
            let (train, test) = (tmp.join("train.bin"), tmp.join("test.bin"));
            std::fs::write(&train, synthetic_cifar10(4000, 0.15, 11))?;
            std::fs::write(&test, synthetic_cifar10(1000, 0.15, 12))?;
            (train, test)
        }
    };
    let cfg = ExperimentConfig::from_json(&config(
        &train.display().to_string(),
        &test.display().to_string(),
    ))?;
    let splits = load_splits(&cfg)?;
    println!(
        "train {} (noise rate {:.3}), val {}, test {}",
        splits.train.len(),
        splits.train.noise_rate().unwrap_or(f64::NAN),
        splits.val.len(),
        splits.test.len()
    );

    let (vanilla, history) = train_vanilla(&cfg, &splits)?;
    let before = score(&vanilla, &splits)?;
    println!(
        "vanilla: final train loss {:.4}, val {:.4}, test {:.4}",
        history.last().map_or(f64::NAN, |e| e.loss),
        before.val.accuracy,
        before.test.accuracy
    );

    let sel = sap_stage(&cfg, &vanilla, &splits)?;
    let after = score(&sel.outcome.model, &splits)?;
    println!(
        "sap: alpha {} (trusted purity {:.3}), val {:.4}, test {:.4}",
        sel.alpha,
        sel.outcome
            .trusted
            .purity(&splits.train)
            .unwrap_or(f64::NAN),
        after.val.accuracy,
        after.test.accuracy
    );
    Ok(())
}
