//! Sweeps the scaling factor α. The representation SVDs are computed once
//! and reused for every value; validation accuracy picks the winner.
//!
//! ```text
//! cargo run --release --example alpha_sweep
//! ```

use sap_unlearn::cli::{load_splits, select_alpha, train_vanilla, ExperimentConfig};
use sap_unlearn::nn::evaluate;
use sap_unlearn::sap::{apply_cached, prepare};

const CONFIG: &str = r#"{
  "seed": 4,
  "dataset": {"kind": "spiral", "n_per_class": 250, "test_per_class": 2000},
  "model": {"kind": "mlp", "hidden": [128, 128, 128, 128, 128, 128, 128, 128, 128]},
  "noise": {"kind": "symmetric", "eta": 0.1},
  "sap": {"n_trust": 200}
}"#;

fn main() -> sap_unlearn::Result<()> {
    let cfg = ExperimentConfig::from_json(CONFIG)?;
    let splits = load_splits(&cfg)?;
    let (model, _) = train_vanilla(&cfg, &splits)?;
    println!(
        "vanilla test accuracy {:.4}",
        evaluate(&model, &splits.test)?.accuracy
    );

    let cache = prepare(&model, &splits.train, cfg.sap.n_trust, cfg.sap.patch_cap)?;
    let grid: Vec<f64> = (0..=8).map(|e| 10f64.powi(e)).collect();
    println!("{:>10}  {:>8}  {:>8}", "alpha", "val acc", "test acc");
    for &alpha in &grid {
        let out = apply_cached(&model, &cache, alpha)?;
        println!(
            "{alpha:>10.0e}  {:>8.4}  {:>8.4}",
            evaluate(&out.model, &splits.val)?.accuracy,
            evaluate(&out.model, &splits.test)?.accuracy
        );
    }
    let best = select_alpha(&model, &cache, &splits.val, &grid)?;
    println!(
        "best on validation: α = {:e}, test accuracy {:.4}",
        best.alpha,
        evaluate(&best.outcome.model, &splits.test)?.accuracy
    );
    Ok(())
}
