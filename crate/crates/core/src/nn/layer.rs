use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ConvGeometry, Matrix, TensorShape};

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;

/// Fully connected layer, `out = in · Wᵀ + b` with `W` of shape `f_out × f_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Square-kernel convolution with the weight in reshaped `C_out × C_in·k·k` form.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub geometry: ConvGeometry,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Per-channel batch normalisation. For flat inputs every feature is a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub shape: TensorShape,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    BatchNorm(BatchNorm),
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Conv2d,
    BatchNorm,
    Relu,
}

/// Shape-only description of one layer, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Conv2d {
        geometry: ConvGeometry,
    },
    BatchNorm {
        shape: TensorShape,
        eps: f64,
        momentum: f64,
    },
    Relu,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Relu => LayerKind::Relu,
        }
    }

    /// Dense and conv layers carry a projectable weight matrix.
    pub fn has_weight(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv2d(_))
    }

    pub fn weight(&self) -> Option<&Matrix> {
        match self {
            Layer::Dense(d) => Some(&d.weight),
            Layer::Conv2d(c) => Some(&c.weight),
            _ => None,
        }
    }

    pub fn bias(&self) -> Option<&[f64]> {
        match self {
            Layer::Dense(d) => Some(&d.bias),
            Layer::Conv2d(c) => Some(&c.bias),
            _ => None,
        }
    }

    pub(crate) fn weight_mut(&mut self) -> Option<&mut Matrix> {
        match self {
            Layer::Dense(d) => Some(&mut d.weight),
            Layer::Conv2d(c) => Some(&mut c.weight),
            _ => None,
        }
    }

    /// Trainable tensors in a fixed order: weight then bias, or gamma then beta.
    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(d) => vec![d.weight.data(), &d.bias],
            Layer::Conv2d(c) => vec![c.weight.data(), &c.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            Layer::Relu => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(d) => vec![d.weight.data_mut(), &mut d.bias],
            Layer::Conv2d(c) => vec![c.weight.data_mut(), &mut c.bias],
            Layer::BatchNorm(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Relu => vec![],
        }
    }

    /// Every stored tensor (parameters plus running statistics), in
    /// checkpoint order.
    pub(crate) fn state(&self) -> Vec<&[f64]> {
        match self {
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta, &b.running_mean, &b.running_var],
            other => other.params(),
        }
    }

    pub(crate) fn state_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::BatchNorm(b) => vec![
                &mut b.gamma,
                &mut b.beta,
                &mut b.running_mean,
                &mut b.running_var,
            ],
            other => other.params_mut(),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense(d) => LayerSpec::Dense {
                in_features: d.weight.cols(),
                out_features: d.weight.rows(),
            },
            Layer::Conv2d(c) => LayerSpec::Conv2d {
                geometry: c.geometry,
            },
            Layer::BatchNorm(b) => LayerSpec::BatchNorm {
                shape: b.shape,
                eps: b.eps,
                momentum: b.momentum,
            },
            Layer::Relu => LayerSpec::Relu,
        }
    }

    /// Output shape for the given input shape, or a shape error.
    pub fn output_shape(&self, input: TensorShape) -> Result<TensorShape> {
        match self {
            Layer::Dense(d) => {
                if input.len() != d.weight.cols() {
                    return Err(Error::shape(format!(
                        "dense layer expects {} inputs, got {}",
                        d.weight.cols(),
                        input.len()
                    )));
                }
                if d.bias.len() != d.weight.rows() {
                    return Err(Error::shape("dense bias length differs from output width"));
                }
                Ok(TensorShape::flat(d.weight.rows()))
            }
            Layer::Conv2d(c) => {
                c.geometry.validate()?;
                if input != c.geometry.input_shape() {
                    return Err(Error::shape(format!(
                        "conv layer expects input {:?}, got {:?}",
                        c.geometry.input_shape(),
                        input
                    )));
                }
                if c.weight.shape() != (c.geometry.out_channels, c.geometry.patch_len())
                    || c.bias.len() != c.geometry.out_channels
                {
                    return Err(Error::shape("conv weight or bias does not match geometry"));
                }
                Ok(c.geometry.output_shape())
            }
            Layer::BatchNorm(b) => {
                if input.len() != b.shape.len() {
                    return Err(Error::shape(format!(
                        "batchnorm expects {} features, got {}",
                        b.shape.len(),
                        input.len()
                    )));
                }
                let c = b.shape.channels;
                if [&b.gamma, &b.beta, &b.running_mean, &b.running_var]
                    .iter()
                    .any(|v| v.len() != c)
                {
                    return Err(Error::shape(
                        "batchnorm vectors must have one entry per channel",
                    ));
                }
                if b.running_var.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::validation(
                        "batchnorm running variance must be positive",
                    ));
                }
                Ok(input)
            }
            Layer::Relu => Ok(input),
        }
    }
}

impl LayerSpec {
    /// Builds a freshly initialised layer. Weights and biases are drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub(crate) fn init(&self, rng: &mut ChaCha8Rng) -> Result<Layer> {
        Ok(match *self {
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                if in_features == 0 || out_features == 0 {
                    return Err(Error::shape("dense layer widths must be positive"));
                }
                let bound = 1.0 / (in_features as f64).sqrt();
                let weight = Matrix::from_fn(out_features, in_features, |_, _| {
                    rng.random_range(-bound..bound)
                });
                let bias = (0..out_features)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Layer::Dense(Dense { weight, bias })
            }
            LayerSpec::Conv2d { geometry } => {
                geometry.validate()?;
                let fan_in = geometry.patch_len();
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight = Matrix::from_fn(geometry.out_channels, fan_in, |_, _| {
                    rng.random_range(-bound..bound)
                });
                let bias = (0..geometry.out_channels)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Layer::Conv2d(Conv2d {
                    geometry,
                    weight,
                    bias,
                })
            }
            LayerSpec::BatchNorm {
                shape,
                eps,
                momentum,
            } => {
                if !(eps > 0.0) || !(momentum > 0.0 && momentum <= 1.0) {
                    return Err(Error::validation(
                        "batchnorm needs eps > 0 and momentum in (0, 1]",
                    ));
                }
                let c = shape.channels;
                Layer::BatchNorm(BatchNorm {
                    shape,
                    gamma: vec![1.0; c],
                    beta: vec![0.0; c],
                    running_mean: vec![0.0; c],
                    running_var: vec![1.0; c],
                    eps,
                    momentum,
                })
            }
            LayerSpec::Relu => Layer::Relu,
        })
    }

    /// Number of `f64` values this layer stores in a checkpoint.
    pub(crate) fn state_len(&self) -> usize {
        match *self {
            LayerSpec::Dense {
                in_features,
                out_features,
            } => out_features * in_features + out_features,
            LayerSpec::Conv2d { geometry } => {
                geometry.out_channels * geometry.patch_len() + geometry.out_channels
            }
            LayerSpec::BatchNorm { shape, .. } => 4 * shape.channels,
            LayerSpec::Relu => 0,
        }
    }
}
