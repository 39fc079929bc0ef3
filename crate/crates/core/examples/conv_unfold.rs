//! Convolution as matrix multiplication: unfolded patches times the reshaped
//! kernel reproduce a direct sliding-window convolution.
//!
//! ```text
//! cargo run --release --example conv_unfold
//! ```

use sap_unlearn::linalg::{matmul, reshape_conv_weights, unfold, ConvGeometry, ConvKernel};

fn main() -> sap_unlearn::Result<()> {
    // One 3×3 channel, 2×2 kernel: four overlapping patches.
    let x: Vec<f64> = (1..=9).map(f64::from).collect();
    let g = ConvGeometry::new(1, 1, 2, 1, 0, 3, 3)?;
    let patches = unfold(&x, &g)?;
    println!("patches ({} × {}):", patches.rows(), patches.cols());
    for p in 0..patches.rows() {
        println!("  {:?}", patches.row(p));
    }

    // Two input channels, three filters, stride 2 with padding 1.
    let (c_in, c_out, k, h, w) = (2, 3, 3, 5, 5);
    let g = ConvGeometry::new(c_in, c_out, k, 2, 1, h, w)?;
    let x: Vec<f64> = (0..c_in * h * w)
        .map(|i| ((i * 7) % 11) as f64 - 5.0)
        .collect();
    let kdata: Vec<f64> = (0..c_out * c_in * k * k)
        .map(|i| ((i * 5) % 7) as f64 - 3.0)
        .collect();
    let kernel = ConvKernel::new(c_out, c_in, k, kdata)?;
    let y = matmul(
        &unfold(&x, &g)?,
        &reshape_conv_weights(&kernel)?.transpose(),
    )?;

    let mut worst: f64 = 0.0;
    for o in 0..c_out {
        for oi in 0..g.out_height() {
            for oj in 0..g.out_width() {
                let mut acc = 0.0;
                for c in 0..c_in {
                    for ki in 0..k {
                        for kj in 0..k {
                            let (i, j) = ((oi * 2 + ki) as isize - 1, (oj * 2 + kj) as isize - 1);
                            if (0..h as isize).contains(&i) && (0..w as isize).contains(&j) {
                                acc += x[(c * h + i as usize) * w + j as usize]
                                    * kernel.get(o, c, ki, kj);
                            }
                        }
                    }
                }
                let p = oi * g.out_width() + oj;
                worst = worst.max((y.get(p, o) - acc).abs());
            }
        }
    }
    println!(
        "{}×{} output per filter, max |unfold·Wᵀ − direct| = {worst:e}",
        g.out_height(),
        g.out_width()
    );
    Ok(())
}
