//! Runs a full experiment from a JSON config and writes the run directory:
//! checkpoints, `metrics.csv`, and a manifest with content hashes.
//!
//! ```text
//! cargo run --release --example run_config -- configs/spiral_quick.json [OUT_DIR]
//! ```

use std::path::PathBuf;

use sap_unlearn::cli::{cmd_run, verify_run, ExperimentConfig};

fn main() -> sap_unlearn::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/spiral_quick.json")
    });
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(out) = args.next() {
        cfg.output_dir = out.into();
    }
    println!(
        "config {} → {} (run id {})",
        path.display(),
        cfg.output_dir.display(),
        cfg.run_id()
    );
    cmd_run(&cfg)?;
    let problems = verify_run(&cfg.output_dir)?;
    println!(
        "manifest check: {}",
        if problems.is_empty() {
            "ok".to_owned()
        } else {
            problems.join("; ")
        }
    );
    Ok(())
}
