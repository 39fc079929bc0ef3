//! Trains a batch-normalised MLP on the two-spiral problem and reports the
//! loss curve and test accuracy.
//!
//! `--paper` switches to the full protocol: nine 500-wide hidden layers,
//! 250 epochs at batch 512 with plateau decay. That takes about a minute.
//!
//! ```text
//! cargo run --release --example train_spiral [-- --paper]
//! ```

use sap_unlearn::data::spiral;
use sap_unlearn::nn::{evaluate, train, Architecture, Model, TrainConfig};

fn main() -> sap_unlearn::Result<()> {
    let paper = std::env::args().any(|a| a == "--paper");
    let (hidden, cfg) = if paper {
        (vec![500; 9], TrainConfig::default())
    } else {
        (
            vec![64; 3],
            TrainConfig {
                learning_rate: 0.05,
                momentum: 0.9,
                nesterov: true,
                batch_size: 64,
                epochs: 150,
                ..TrainConfig::default()
            },
        )
    };
    let train_set = spiral(250, 0.05, 1)?;
    let test_set = spiral(5000, 0.05, 2)?;
    let init = Model::init(&Architecture::mlp(2, &hidden, 2, true), 3)?;
    let (model, history) = train(&init, &train_set, &cfg)?;

    for e in history.epochs.iter().step_by((cfg.epochs / 10).max(1)) {
        println!(
            "epoch {:>3}  loss {:.4}  train acc {:.3}  lr {:.4}",
            e.epoch, e.loss, e.accuracy, e.learning_rate
        );
    }
    let test = evaluate(&model, &test_set)?;
    println!(
        "test accuracy {:.4} ({} / {})",
        test.accuracy, test.correct, test.total
    );
    Ok(())
}
