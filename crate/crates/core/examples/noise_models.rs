//! Label-noise transition matrices and per-sample corruption.
//!
//! ```text
//! cargo run --release --example noise_models
//! ```

use sap_unlearn::data::LabeledDataset;
use sap_unlearn::linalg::{Matrix, TensorShape};
use sap_unlearn::noise::{
    asymmetric, corrupt, hierarchical, symmetric, HierarchyGroups, TransitionMatrix,
};

fn show(name: &str, t: &TransitionMatrix) {
    println!("{name}:");
    for i in 0..t.k() {
        let row: Vec<String> = t.row(i).iter().map(|p| format!("{p:.3}")).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> sap_unlearn::Result<()> {
    show("symmetric, K=4, η=0.2", &symmetric(4, 0.2)?);
    show("asymmetric, K=4, η=0.2", &asymmetric(4, 0.2, 3)?);
    let groups = HierarchyGroups::from_clusters(4, &[vec![0, 1], vec![2, 3]])?;
    show(
        "hierarchical, K=4, η=0.2, clusters {0,1} {2,3}",
        &hierarchical(4, 0.2, &groups)?,
    );

    let n = 20_000;
    let x = Matrix::from_fn(n, 1, |i, _| i as f64);
    let data = LabeledDataset::new(
        x,
        TensorShape::flat(1),
        (0..n).map(|i| i % 10).collect(),
        None,
        10,
    )?;
    for (name, t) in [
        ("symmetric", symmetric(10, 0.25)?),
        (
            "hierarchical (pairs)",
            hierarchical(10, 0.25, &HierarchyGroups::cifar10_pairs())?,
        ),
    ] {
        let noisy = corrupt(&data, &t, 42)?;
        println!(
            "{name} η=0.25 on {n} samples: observed flip rate {:.4}",
            noisy.noise_rate().unwrap_or(0.0)
        );
    }
    Ok(())
}
