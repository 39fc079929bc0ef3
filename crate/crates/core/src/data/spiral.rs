use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, TensorShape};

/// Curve parameter range; both arms share it.
pub const T_MIN: f64 = 0.25;
pub const T_MAX: f64 = 1.0;
/// Total sweep of each arm in radians.
pub const ARM_SWEEP: f64 = 1.5 * PI;

/// Noise-free point `i` of `n` on arm `class`: radius `t`, angle
/// `t · 3π/2 + class · π`, with `t` evenly spaced over `[0.25, 1]`.
pub fn spiral_point(class: usize, i: usize, n: usize) -> (f64, f64) {
    let t = if n <= 1 {
        T_MIN
    } else {
        T_MIN + (T_MAX - T_MIN) * i as f64 / (n - 1) as f64
    };
    let theta = t * ARM_SWEEP + class as f64 * PI;
    (t * theta.cos(), t * theta.sin())
}

/// Two interleaved Archimedean spirals with Gaussian coordinate jitter.
/// Class 0 samples come first.
pub fn spiral(n_per_class: usize, noise_std: f64, seed: u64) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::validation(
            "spiral needs at least one sample per class",
        ));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::validation(format!(
            "noise_std {noise_std} must be a finite non-negative number"
        )));
    }
    let jitter = Normal::new(0.0, noise_std).map_err(|e| Error::validation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(4 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for class in 0..2 {
        for i in 0..n_per_class {
            let (x, y) = spiral_point(class, i, n_per_class);
            if noise_std > 0.0 {
                data.push(x + jitter.sample(&mut rng));
                data.push(y + jitter.sample(&mut rng));
            } else {
                data.push(x);
                data.push(y);
            }
            labels.push(class);
        }
    }
    LabeledDataset::new(
        Matrix::new(2 * n_per_class, 2, data)?,
        TensorShape::flat(2),
        labels,
        None,
        2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_balance() {
        let d = spiral(250, 0.05, 1).unwrap();
        assert_eq!(d.len(), 500);
        assert_eq!(d.classes(), 2);
        assert_eq!(d.labels().iter().filter(|&&l| l == 0).count(), 250);
        assert_eq!(spiral(5000, 0.05, 2).unwrap().len(), 10_000);
    }

    #[test]
    fn noiseless_points_lie_on_curves() {
        let n = 40;
        let d = spiral(n, 0.0, 9).unwrap();
        for idx in 0..d.len() {
            let class = d.labels()[idx];
            let i = idx % n;
            let t = T_MIN + (T_MAX - T_MIN) * i as f64 / (n - 1) as f64;
            let th = t * ARM_SWEEP + class as f64 * PI;
            let p = d.sample(idx);
            assert!((p[0] - t * th.cos()).abs() <= 1e-12);
            assert!((p[1] - t * th.sin()).abs() <= 1e-12);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(spiral(30, 0.1, 5).unwrap(), spiral(30, 0.1, 5).unwrap());
        assert_ne!(spiral(30, 0.1, 5).unwrap(), spiral(30, 0.1, 6).unwrap());
    }

    #[test]
    fn rejects_empty() {
        assert!(spiral(0, 0.1, 0).is_err());
        assert!(spiral(3, -1.0, 0).is_err());
    }
}
