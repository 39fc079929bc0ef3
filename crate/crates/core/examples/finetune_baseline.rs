//! Compares SAP with the finetune baseline, which continues training on a
//! retain set of known-clean samples.
//!
//! ```text
//! cargo run --release --example finetune_baseline
//! ```

use sap_unlearn::cli::{finetune_stage, load_splits, sap_stage, train_vanilla, ExperimentConfig};
use sap_unlearn::nn::evaluate;

const CONFIG: &str = r#"{
  "seed": 8,
  "dataset": {"kind": "spiral", "n_per_class": 250, "test_per_class": 2000},
  "model": {"kind": "mlp", "hidden": [128, 128, 128, 128, 128, 128, 128, 128, 128]},
  "noise": {"kind": "symmetric", "eta": 0.1},
  "sap": {"n_trust": 200, "alpha_grid": [100, 1000, 10000, 30000, 100000]},
  "finetune": {"retain_fraction": 0.2,
               "train": {"learning_rate": 0.01, "momentum": 0.9, "batch_size": 32, "epochs": 10}}
}"#;

fn main() -> sap_unlearn::Result<()> {
    let cfg = ExperimentConfig::from_json(CONFIG)?;
    let splits = load_splits(&cfg)?;
    let (vanilla, _) = train_vanilla(&cfg, &splits)?;
    let spec = cfg
        .finetune
        .as_ref()
        .expect("config has a finetune section");
    let tuned = finetune_stage(&cfg, &vanilla, &splits.train, spec)?;
    let projected = sap_stage(&cfg, &vanilla, &splits)?;

    for (name, model) in [
        ("vanilla", &vanilla),
        ("finetune", &tuned),
        ("sap", &projected.outcome.model),
    ] {
        let e = evaluate(model, &splits.test)?;
        println!(
            "{name:<9} test accuracy {:.4}  loss {:.4}",
            e.accuracy, e.loss
        );
    }
    println!("sap chose α = {}", projected.alpha);
    Ok(())
}
