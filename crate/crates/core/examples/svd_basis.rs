//! Full SVD of a rank-deficient matrix: descending spectrum, clamped zeros,
//! orthonormal factors, and an exact reconstruction.
//!
//! ```text
//! cargo run --release --example svd_basis
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sap_unlearn::linalg::{matmul, orthonormality_defect, svd, Matrix};

fn main() -> sap_unlearn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut random = |r, c| Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    // 12×8 with rank 3.
    let a = matmul(&random(12, 3), &random(3, 8))?;

    let s = svd(&a)?;
    println!("shape {:?}, numerical rank {}", a.shape(), s.rank());
    for (i, sigma) in s.sigma.iter().enumerate() {
        println!("  σ{i} = {sigma:.6e}");
    }
    let residual = s.reconstruct().sub(&a)?.frobenius_norm() / a.frobenius_norm();
    println!("relative reconstruction residual {residual:.2e}");
    println!(
        "orthonormality defect: U {:.2e}, V {:.2e}",
        orthonormality_defect(&s.u),
        orthonormality_defect(&s.v)
    );
    let energy: f64 = s.sigma.iter().map(|x| x * x).sum();
    println!(
        "Σσ² = {energy:.6}, ‖A‖²_F = {:.6}",
        a.frobenius_norm().powi(2)
    );
    Ok(())
}
