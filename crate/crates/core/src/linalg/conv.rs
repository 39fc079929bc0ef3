//! Unfold (im2col) and the matching kernel layout.
//!
//! Canonical patch layout: output positions scan row-major, and within one
//! patch the entries run channel-major, then kernel row, then kernel column.
//! [`reshape_conv_weights`] flattens kernels in the same order, so
//! `unfold(x) · Wᵀ` is the convolution with output pixels as rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Channel-major image shape, `C × H × W`. Flat feature vectors use `C × 1 × 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl TensorShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn flat(features: usize) -> Self {
        Self::new(features, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn spatial(&self) -> usize {
        self.height * self.width
    }
}

/// Square-kernel convolution geometry, including the input extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_height: usize,
    pub in_width: usize,
}

impl ConvGeometry {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        in_height: usize,
        in_width: usize,
    ) -> Result<Self> {
        let g = Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            in_height,
            in_width,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::shape("convolution needs at least one channel"));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::shape("kernel size and stride must be positive"));
        }
        let padded_h = self.in_height + 2 * self.padding;
        let padded_w = self.in_width + 2 * self.padding;
        if padded_h < self.kernel || padded_w < self.kernel {
            return Err(Error::shape(format!(
                "kernel {} does not fit padded input {padded_h}x{padded_w}",
                self.kernel
            )));
        }
        Ok(())
    }

    pub fn out_height(&self) -> usize {
        (self.in_height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.in_width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Number of output pixels, `h_o · w_o`.
    pub fn patch_count(&self) -> usize {
        self.out_height() * self.out_width()
    }

    /// `C_in · k · k`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn input_shape(&self) -> TensorShape {
        TensorShape::new(self.in_channels, self.in_height, self.in_width)
    }

    pub fn output_shape(&self) -> TensorShape {
        TensorShape::new(self.out_channels, self.out_height(), self.out_width())
    }

    /// Input offset read by patch entry `(c, ki, kj)` of output pixel
    /// `(oi, oj)`, or `None` when it falls in the zero padding.
    #[inline]
    fn source(&self, c: usize, ki: usize, kj: usize, oi: usize, oj: usize) -> Option<usize> {
        let i = (oi * self.stride + ki).checked_sub(self.padding)?;
        let j = (oj * self.stride + kj).checked_sub(self.padding)?;
        if i >= self.in_height || j >= self.in_width {
            return None;
        }
        Some((c * self.in_height + i) * self.in_width + j)
    }
}

/// Unfolds one `C × H × W` sample into an `n_p × C·k·k` patch matrix.
pub fn unfold(activation: &[f64], geom: &ConvGeometry) -> Result<Matrix> {
    geom.validate()?;
    if activation.len() != geom.input_shape().len() {
        return Err(Error::shape(format!(
            "activation has {} entries, geometry expects {}x{}x{}",
            activation.len(),
            geom.in_channels,
            geom.in_height,
            geom.in_width
        )));
    }
    let mut data = vec![0.0; geom.patch_count() * geom.patch_len()];
    unfold_into(activation, geom, &mut data);
    Ok(Matrix::from_parts(
        geom.patch_count(),
        geom.patch_len(),
        data,
    ))
}

/// Writes the patch matrix of one sample into a zeroed `n_p · C·k·k` buffer.
pub(crate) fn unfold_into(activation: &[f64], geom: &ConvGeometry, data: &mut [f64]) {
    let (ho, wo) = (geom.out_height(), geom.out_width());
    let k = geom.kernel;
    let plen = geom.patch_len();
    debug_assert_eq!(data.len(), ho * wo * plen);
    for oi in 0..ho {
        for oj in 0..wo {
            let row = &mut data[(oi * wo + oj) * plen..(oi * wo + oj + 1) * plen];
            let mut idx = 0;
            for c in 0..geom.in_channels {
                for ki in 0..k {
                    for kj in 0..k {
                        if let Some(src) = geom.source(c, ki, kj, oi, oj) {
                            row[idx] = activation[src];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// Adjoint of [`unfold`]: scatters patch rows back onto the input grid,
/// accumulating overlaps into `out`.
pub(crate) fn fold_add(patches: &[f64], geom: &ConvGeometry, out: &mut [f64]) {
    let (ho, wo) = (geom.out_height(), geom.out_width());
    let k = geom.kernel;
    let plen = geom.patch_len();
    debug_assert_eq!(patches.len(), ho * wo * plen);
    debug_assert_eq!(out.len(), geom.input_shape().len());
    for oi in 0..ho {
        for oj in 0..wo {
            let p = oi * wo + oj;
            let row = &patches[p * plen..(p + 1) * plen];
            let mut idx = 0;
            for c in 0..geom.in_channels {
                for ki in 0..k {
                    for kj in 0..k {
                        if let Some(dst) = geom.source(c, ki, kj, oi, oj) {
                            out[dst] += row[idx];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
}

/// A `C_out × C_in × k × k` kernel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub data: Vec<f64>,
}

impl ConvKernel {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != out_channels * in_channels * kernel * kernel {
            return Err(Error::shape(format!(
                "kernel data has {} entries, expected {out_channels}x{in_channels}x{kernel}x{kernel}",
                data.len()
            )));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel,
            data,
        })
    }

    #[inline]
    pub fn get(&self, o: usize, c: usize, i: usize, j: usize) -> f64 {
        let k = self.kernel;
        self.data[((o * self.in_channels + c) * k + i) * k + j]
    }
}

/// Flattens a kernel to `C_out × C_in·k·k` in the unfold patch order.
pub fn reshape_conv_weights(kernel: &ConvKernel) -> Result<Matrix> {
    let cols = kernel.in_channels * kernel.kernel * kernel.kernel;
    Matrix::new(kernel.out_channels, cols, kernel.data.clone())
}

/// Inverse of [`reshape_conv_weights`].
pub fn unreshape_conv_weights(
    weights: &Matrix,
    in_channels: usize,
    kernel: usize,
) -> Result<ConvKernel> {
    if weights.cols() != in_channels * kernel * kernel {
        return Err(Error::shape(format!(
            "weight matrix has {} columns, expected {in_channels}*{kernel}*{kernel}",
            weights.cols()
        )));
    }
    ConvKernel::new(weights.rows(), in_channels, kernel, weights.data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_two_by_two_patches() {
        let x: Vec<f64> = (1..=9).map(f64::from).collect();
        let g = ConvGeometry::new(1, 1, 2, 1, 0, 3, 3).unwrap();
        let u = unfold(&x, &g).unwrap();
        let expected = Matrix::from_rows(&[
            [1.0, 2.0, 4.0, 5.0],
            [2.0, 3.0, 5.0, 6.0],
            [4.0, 5.0, 7.0, 8.0],
            [5.0, 6.0, 8.0, 9.0],
        ])
        .unwrap();
        assert_eq!(u, expected);
    }

    #[test]
    fn one_by_one_kernel_gives_pixel_channel_vectors() {
        let (c, h, w) = (3, 2, 4);
        let x: Vec<f64> = (0..c * h * w).map(|v| v as f64).collect();
        let g = ConvGeometry::new(c, 5, 1, 1, 0, h, w).unwrap();
        let u = unfold(&x, &g).unwrap();
        assert_eq!(u.shape(), (h * w, c));
        for p in 0..h * w {
            for ch in 0..c {
                assert_eq!(u.get(p, ch), x[ch * h * w + p]);
            }
        }
    }

    #[test]
    fn padding_inserts_zeros() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let g = ConvGeometry::new(1, 1, 3, 1, 1, 2, 2).unwrap();
        let u = unfold(&x, &g).unwrap();
        assert_eq!(u.shape(), (4, 9));
        assert_eq!(u.row(0), &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 3.0, 4.0]);
    }

    #[test]
    fn oversized_kernel_is_a_shape_error() {
        assert!(matches!(
            ConvGeometry::new(1, 1, 4, 1, 0, 3, 3),
            Err(Error::Shape(_))
        ));
        let g = ConvGeometry {
            in_channels: 1,
            out_channels: 1,
            kernel: 5,
            stride: 1,
            padding: 0,
            in_height: 3,
            in_width: 3,
        };
        assert!(matches!(unfold(&[0.0; 9], &g), Err(Error::Shape(_))));
    }

    #[test]
    fn wrong_activation_length() {
        let g = ConvGeometry::new(2, 1, 1, 1, 0, 2, 2).unwrap();
        assert!(matches!(unfold(&[0.0; 4], &g), Err(Error::Shape(_))));
    }

    #[test]
    fn kernel_reshape_layout_and_round_trip() {
        let k = ConvKernel::new(1, 1, 1, vec![3.5]).unwrap();
        assert_eq!(
            reshape_conv_weights(&k).unwrap(),
            Matrix::from_rows(&[[3.5]]).unwrap()
        );

        let data: Vec<f64> = (0..8).map(|v| v as f64 * 1.5 - 2.0).collect();
        let k = ConvKernel::new(2, 1, 2, data).unwrap();
        let m = reshape_conv_weights(&k).unwrap();
        assert_eq!(m.shape(), (2, 4));
        for o in 0..2 {
            let mut idx = 0;
            for i in 0..2 {
                for j in 0..2 {
                    assert_eq!(m.get(o, idx), k.get(o, 0, i, j));
                    idx += 1;
                }
            }
        }
        let back = unreshape_conv_weights(&m, 1, 2).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn fold_is_adjoint_of_unfold() {
        let g = ConvGeometry::new(2, 1, 3, 2, 1, 5, 4).unwrap();
        let x: Vec<f64> = (0..40).map(|v| (v as f64 * 0.7).sin()).collect();
        let y = Matrix::from_fn(g.patch_count(), g.patch_len(), |r, c| {
            ((r * 31 + c * 7) as f64).cos()
        });
        let ux = unfold(&x, &g).unwrap();
        let lhs: f64 = ux.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let mut fy = vec![0.0; x.len()];
        fold_add(y.data(), &g, &mut fy);
        let rhs: f64 = x.iter().zip(&fy).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
