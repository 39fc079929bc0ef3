//! Writes decision-boundary lattices before and after SAP as CSV
//! (`x,y,class`), ready for any plotting tool.
//!
//! ```text
//! cargo run --release --example decision_boundary [-- OUT_DIR]
//! ```

use std::path::PathBuf;

use sap_unlearn::cli::{boundary, write_csv, GridSpec};
use sap_unlearn::data::spiral;
use sap_unlearn::nn::{train, Architecture, Model, TrainConfig};
use sap_unlearn::noise::{corrupt, symmetric};
use sap_unlearn::sap::{sap, SapConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "boundary-out".into()),
    );
    std::fs::create_dir_all(&out_dir)?;

    let data = corrupt(&spiral(250, 0.05, 30)?, &symmetric(2, 0.1)?, 31)?;
    let cfg = TrainConfig::default();
    let init = Model::init(&Architecture::mlp(2, &[128; 9], 2, true), 32)?;
    let (noisy, _) = train(&init, &data, &cfg)?;
    let projected = sap(
        &noisy,
        &data,
        &SapConfig {
            n_trust: 200,
            ..SapConfig::default()
        },
    )?
    .model;

    let grid = GridSpec {
        xmin: -1.2,
        xmax: 1.2,
        ymin: -1.2,
        ymax: 1.2,
        res: 121,
    };
    for (name, model) in [("vanilla", &noisy), ("sap", &projected)] {
        let points = boundary(model, &grid)?;
        let share = points.iter().filter(|p| p.class == 1).count() as f64 / points.len() as f64;
        let path = out_dir.join(format!("{name}_boundary.csv"));
        write_csv(&path, &points)?;
        println!(
            "{}: {} points, {:.1}% predicted class 1",
            path.display(),
            points.len(),
            100.0 * share
        );
    }
    data.save_csv(&out_dir.join("train.csv"))?;
    Ok(())
}
