//! End to end on spirals: corrupt 10% of the labels, train, then project the
//! weights with SAP and compare against a model trained on clean labels.
//!
//! ```text
//! cargo run --release --example sap_spiral
//! ```

use sap_unlearn::data::{spiral, split};
use sap_unlearn::nn::{evaluate, train, Architecture, Model, TrainConfig};
use sap_unlearn::noise::{corrupt, symmetric};
use sap_unlearn::sap::{sap, SapConfig};

fn main() -> sap_unlearn::Result<()> {
    let pool = corrupt(&spiral(250, 0.05, 10)?, &symmetric(2, 0.1)?, 11)?;
    let (train_set, _) = split(&pool, 0.95, 12)?;
    let test_set = spiral(5000, 0.05, 13)?;
    println!(
        "{} training samples, {:.1}% mislabeled",
        train_set.len(),
        100.0 * train_set.noise_rate().unwrap_or(0.0)
    );

    let cfg = TrainConfig::default();
    let init = Model::init(&Architecture::mlp(2, &[128; 9], 2, true), 14)?;
    let (noisy, _) = train(&init, &train_set, &cfg)?;
    let (clean, _) = train(&init, &train_set.with_clean_labels(), &cfg)?;

    let out = sap(
        &noisy,
        &train_set,
        &SapConfig {
            n_trust: 200,
            ..SapConfig::default()
        },
    )?;
    let acc = |m: &Model| evaluate(m, &test_set).map(|e| e.accuracy);
    println!("clean-label model  test {:.4}", acc(&clean)?);
    println!("noisy-label model  test {:.4}", acc(&noisy)?);
    println!(
        "after SAP          test {:.4}  (trusted set purity {:.3})",
        acc(&out.model)?,
        out.trusted.purity(&train_set).unwrap_or(f64::NAN)
    );
    for p in &out.bundle.layers {
        let kept = p.lambda.iter().filter(|&&l| l > 0.5).count();
        println!(
            "  layer {:>2}: {:>3} of {:>3} directions kept above λ=0.5",
            p.layer,
            kept,
            p.lambda.len()
        );
    }
    Ok(())
}
