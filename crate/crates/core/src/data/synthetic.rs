//! Class-conditional textured images in the CIFAR-10 binary layout, for
//! demonstrations and tests when the real batches are not at hand.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::cifar::{CLASSES, IMAGE_SIDE, RECORD_BYTES};

const TEMPLATE_SEED: u64 = 0x5a17_7e47;

/// Per-class texture: two oriented gratings with channel weights.
#[derive(Debug, Clone, Copy)]
struct Template {
    freq: [(f64, f64); 2],
    colour: [[f64; 3]; 2],
    base: [f64; 3],
}

fn templates() -> [Template; CLASSES] {
    let mut rng = ChaCha8Rng::seed_from_u64(TEMPLATE_SEED);
    std::array::from_fn(|_| {
        let mut grating = || {
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let cycles = rng.random_range(1.0..4.0);
            (cycles * angle.cos(), cycles * angle.sin())
        };
        let freq = [grating(), grating()];
        let mut colour = || std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let c = [colour(), colour()];
        Template {
            freq,
            colour: c,
            base: std::array::from_fn(|_| rng.random_range(-0.3..0.3)),
        }
    })
}

/// `n` records with cycling labels. `pixel_noise` is the standard deviation
/// of additive Gaussian noise in units of the full intensity range.
pub fn synthetic_cifar10(n: usize, pixel_noise: f64, seed: u64) -> Vec<u8> {
    let tpl = templates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, pixel_noise.max(0.0)).expect("finite std");
    let side = IMAGE_SIDE as f64;
    let mut out = Vec::with_capacity(n * RECORD_BYTES);
    for i in 0..n {
        let label = i % CLASSES;
        let t = &tpl[label];
        let phase: [f64; 2] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
        let gain = rng.random_range(0.6..1.0);
        out.push(label as u8);
        for ch in 0..3 {
            for y in 0..IMAGE_SIDE {
                for x in 0..IMAGE_SIDE {
                    let mut v = 0.5 + 0.5 * t.base[ch];
                    for g in 0..2 {
                        let (fx, fy) = t.freq[g];
                        let arg = TAU * (fx * x as f64 + fy * y as f64) / side + phase[g];
                        v += 0.2 * gain * t.colour[g][ch] * arg.sin();
                    }
                    v += noise.sample(&mut rng);
                    out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{decode_cifar10, Normalization};

    #[test]
    fn layout_and_determinism() {
        let a = synthetic_cifar10(12, 0.1, 3);
        assert_eq!(a.len(), 12 * RECORD_BYTES);
        assert_eq!(a, synthetic_cifar10(12, 0.1, 3));
        assert_ne!(a, synthetic_cifar10(12, 0.1, 4));
        let d = decode_cifar10(&a, &Normalization::default(), None).unwrap();
        assert_eq!(d.labels()[..11], [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0]);
    }
}
