//! Feed-forward networks with exact backward passes and an SGD trainer.

mod layer;
mod loss;
mod model;
mod train;

pub use layer::{
    BatchNorm, Conv2d, Dense, Layer, LayerKind, LayerSpec, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM,
};
pub use loss::{argmax, per_row_cross_entropy, softmax_cross_entropy};
pub use model::{ActivationTrace, Architecture, ArchitectureBuilder, Gradients, Mode, Model};
pub use train::{
    evaluate, finetune, per_sample_losses, predict, predict_logits, train, EpochStats, Evaluation,
    PlateauConfig, TrainConfig, TrainHistory,
};
