//! Datasets, splits, and on-disk formats.

mod checkpoint;
mod cifar;
mod dataset;
mod spiral;
mod synthetic;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, Provenance,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use cifar::{
    decode_cifar10, load_cifar10, Normalization, CLASSES as CIFAR_CLASSES, CLASS_NAMES,
    RECORD_BYTES,
};
pub use dataset::{split, split_indices, LabeledDataset};
pub use spiral::{spiral, spiral_point, ARM_SWEEP, T_MAX, T_MIN};
pub use synthetic::synthetic_cifar10;
