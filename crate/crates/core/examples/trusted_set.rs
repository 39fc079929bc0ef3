//! How clean the lowest-loss samples are: purity of the trusted set against
//! its size, on a model trained with 10% symmetric label noise.
//!
//! ```text
//! cargo run --release --example trusted_set
//! ```

use sap_unlearn::data::spiral;
use sap_unlearn::nn::{train, Architecture, Model, TrainConfig};
use sap_unlearn::noise::{corrupt, symmetric};
use sap_unlearn::sap::get_trusted;

fn main() -> sap_unlearn::Result<()> {
    let data = corrupt(&spiral(250, 0.05, 20)?, &symmetric(2, 0.1)?, 21)?;
    let cfg = TrainConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        nesterov: true,
        batch_size: 64,
        epochs: 150,
        ..TrainConfig::default()
    };
    let init = Model::init(&Architecture::mlp(2, &[64; 3], 2, true), 22)?;
    let (model, _) = train(&init, &data, &cfg)?;

    println!(
        "random selection purity {:.3}",
        1.0 - data.noise_rate().unwrap_or(0.0)
    );
    for n in [25, 50, 100, 200, 300, 400, 500] {
        let t = get_trusted(&model, &data, n)?;
        println!(
            "n_trust {n:>3}: purity {:.3}, largest selected loss {:.3e}",
            t.purity(&data).unwrap_or(f64::NAN),
            t.losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
