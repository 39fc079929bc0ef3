//! CIFAR-10 binary batches: 3073-byte records, one label byte followed by
//! the red, green, and blue 32×32 planes, each row-major.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, TensorShape};

pub const RECORD_BYTES: usize = 3073;
pub const IMAGE_SIDE: usize = 32;
pub const CLASSES: usize = 10;
const PLANE: usize = IMAGE_SIDE * IMAGE_SIDE;

pub const CLASS_NAMES: [&str; CLASSES] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Per-channel `(x - mean) / std` applied after scaling bytes to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }
}

/// Decodes up to `limit` records from an in-memory batch.
pub fn decode_cifar10(
    bytes: &[u8],
    norm: &Normalization,
    limit: Option<usize>,
) -> Result<LabeledDataset> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::format(format!(
            "{} bytes is not a whole number of {RECORD_BYTES}-byte records",
            bytes.len()
        )));
    }
    if let Some(c) = norm.std.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::validation(format!(
            "channel {c} std must be positive"
        )));
    }
    let total = bytes.len() / RECORD_BYTES;
    let n = limit.map_or(total, |l| l.min(total));
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * 3 * PLANE);
    for (idx, rec) in bytes.chunks_exact(RECORD_BYTES).take(n).enumerate() {
        let label = rec[0] as usize;
        if label >= CLASSES {
            return Err(Error::format(format!(
                "record {idx} has label byte {label}, expected < {CLASSES}"
            )));
        }
        labels.push(label);
        for (c, plane) in rec[1..].chunks_exact(PLANE).enumerate() {
            let (m, s) = (norm.mean[c], norm.std[c]);
            data.extend(plane.iter().map(|&b| (f64::from(b) / 255.0 - m) / s));
        }
    }
    LabeledDataset::new(
        Matrix::new(n, 3 * PLANE, data)?,
        TensorShape::new(3, IMAGE_SIDE, IMAGE_SIDE),
        labels,
        None,
        CLASSES,
    )
}

/// Reads a CIFAR-10 binary batch file.
pub fn load_cifar10(
    path: &Path,
    norm: &Normalization,
    limit: Option<usize>,
) -> Result<LabeledDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cifar10(&bytes, norm, limit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, pixel: impl Fn(usize, usize, usize) -> u8) -> Vec<u8> {
        let mut r = vec![label];
        for c in 0..3 {
            for i in 0..IMAGE_SIDE {
                for j in 0..IMAGE_SIDE {
                    r.push(pixel(c, i, j));
                }
            }
        }
        r
    }

    #[test]
    fn two_records() {
        let mut bytes = record(1, |_, _, _| 0);
        bytes.extend(record(9, |_, _, _| 255));
        let d = decode_cifar10(&bytes, &Normalization::default(), None).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.labels(), &[1, 9]);
        assert!(d.sample(0).iter().all(|&v| v == 0.0));
        assert!(d.sample(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn exact_layout() {
        let pix = |c: usize, i: usize, j: usize| ((c * 97 + i * 31 + j * 7) % 256) as u8;
        let bytes = record(7, pix);
        let d = decode_cifar10(&bytes, &Normalization::default(), None).unwrap();
        assert_eq!(d.labels(), &[7]);
        assert_eq!(d.shape(), TensorShape::new(3, 32, 32));
        let s = d.sample(0);
        for c in 0..3 {
            for i in 0..32 {
                for j in 0..32 {
                    let expect = f64::from(pix(c, i, j)) / 255.0;
                    assert_eq!(s[c * 1024 + i * 32 + j], expect);
                }
            }
        }
        let norm = Normalization {
            mean: [0.5, 0.4, 0.3],
            std: [0.2, 0.25, 0.5],
        };
        let n = decode_cifar10(&bytes, &norm, None).unwrap();
        let expect = (f64::from(pix(2, 3, 4)) / 255.0 - 0.3) / 0.5;
        assert_eq!(n.sample(0)[2 * 1024 + 3 * 32 + 4], expect);
    }

    #[test]
    fn malformed_input() {
        let mut bytes = record(0, |_, _, _| 1);
        bytes.pop();
        assert!(matches!(
            decode_cifar10(&bytes, &Normalization::default(), None),
            Err(Error::Format(_))
        ));
        let mut bytes = record(0, |_, _, _| 1);
        bytes.extend(record(10, |_, _, _| 1));
        let err = decode_cifar10(&bytes, &Normalization::default(), None).unwrap_err();
        assert!(err.to_string().contains("record 1"), "{err}");
    }

    #[test]
    fn limit_truncates() {
        let mut bytes = Vec::new();
        for l in 0..5 {
            bytes.extend(record(l, |_, _, _| l));
        }
        let d = decode_cifar10(&bytes, &Normalization::default(), Some(3)).unwrap();
        assert_eq!(d.labels(), &[0, 1, 2]);
    }
}
