//! Dense matrices, SVD, and convolution unfolding.

mod conv;
mod matrix;
mod svd;

pub(crate) use conv::{fold_add, unfold_into};
pub use conv::{
    reshape_conv_weights, unfold, unreshape_conv_weights, ConvGeometry, ConvKernel, TensorShape,
};
pub(crate) use matrix::{gemm, Op};
pub use matrix::{matmul, Matrix};
pub use svd::{orthonormality_defect, svd, SvdResult, RANK_TOLERANCE};
