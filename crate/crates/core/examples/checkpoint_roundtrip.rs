//! Saves a trained conv model, loads it back, and checks the bytes and the
//! predictions survive unchanged.
//!
//! ```text
//! cargo run --release --example checkpoint_roundtrip
//! ```

use sap_unlearn::data::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, LabeledDataset,
    Provenance,
};
use sap_unlearn::linalg::{Matrix, TensorShape};
use sap_unlearn::nn::{evaluate, train, ArchitectureBuilder, Model, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let shape = TensorShape::new(1, 8, 8);
    let x = Matrix::from_fn(200, shape.len(), |i, j| {
        (((i * 31 + j * 17) % 23) as f64 / 11.0) - 1.0
    });
    let labels = (0..200)
        .map(|i| {
            usize::from(x.row(i)[..32].iter().sum::<f64>() > x.row(i)[32..].iter().sum::<f64>())
        })
        .collect();
    let data = LabeledDataset::new(x, shape, labels, None, 2)?;

    let arch = ArchitectureBuilder::new(shape)
        .conv2d(4, 3, 1, 1)
        .batchnorm()
        .relu()
        .dense(2)
        .finish(2);
    let cfg = TrainConfig {
        learning_rate: 0.05,
        momentum: 0.9,
        batch_size: 32,
        epochs: 20,
        ..TrainConfig::default()
    };
    let (model, _) = train(&Model::init(&arch, 1)?, &data, &cfg)?;

    let provenance = Provenance {
        seed: 1,
        config_digest: "example".into(),
    };
    let path = std::env::temp_dir().join(format!("sap-roundtrip-{}.ckpt", std::process::id()));
    save_checkpoint(&model, &provenance, &path)?;
    let loaded = load_checkpoint(&path)?;
    let bytes = std::fs::read(&path)?;
    std::fs::remove_file(&path).ok();

    println!("{} bytes, provenance {:?}", bytes.len(), loaded.provenance);
    println!("model equal after load: {}", loaded.model == model);
    println!(
        "re-encoding is byte-identical: {}",
        encode_checkpoint(&loaded.model, &loaded.provenance) == bytes
    );
    println!(
        "accuracy before {:.4}, after {:.4}",
        evaluate(&model, &data)?.accuracy,
        evaluate(&loaded.model, &data)?.accuracy
    );
    let mut corrupted = bytes.clone();
    corrupted[3] ^= 0xff;
    println!(
        "corrupted magic rejected: {}",
        decode_checkpoint(&corrupted).is_err()
    );
    Ok(())
}
