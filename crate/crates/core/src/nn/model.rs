use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fold_add, gemm, unfold_into, ConvGeometry, Matrix, Op, TensorShape};
use crate::nn::layer::{
    BatchNorm, Conv2d, Dense, Layer, LayerSpec, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM,
};
use crate::nn::loss::softmax_cross_entropy;

/// Full shape description of a model: input, class count, and layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input: TensorShape,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Dense stack `in → hidden[0] → … → classes`. Every hidden dense layer is
    /// followed by batchnorm (when enabled) and then ReLU.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize, batchnorm: bool) -> Self {
        let mut b = ArchitectureBuilder::new(TensorShape::flat(input));
        for &h in hidden {
            b = b.dense(h);
            if batchnorm {
                b = b.batchnorm();
            }
            b = b.relu();
        }
        b.dense(classes).finish(classes)
    }
}

/// Incremental builder that tracks the running shape.
#[derive(Debug)]
pub struct ArchitectureBuilder {
    input: TensorShape,
    current: TensorShape,
    layers: Vec<LayerSpec>,
    error: Option<Error>,
}

impl ArchitectureBuilder {
    pub fn new(input: TensorShape) -> Self {
        Self {
            input,
            current: input,
            layers: Vec::new(),
            error: None,
        }
    }

    pub fn current_shape(&self) -> TensorShape {
        self.current
    }

    pub fn dense(mut self, units: usize) -> Self {
        self.layers.push(LayerSpec::Dense {
            in_features: self.current.len(),
            out_features: units,
        });
        self.current = TensorShape::flat(units);
        self
    }

    pub fn conv2d(
        mut self,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        let s = self.current;
        match ConvGeometry::new(
            s.channels,
            out_channels,
            kernel,
            stride,
            padding,
            s.height,
            s.width,
        ) {
            Ok(geometry) => {
                self.current = geometry.output_shape();
                self.layers.push(LayerSpec::Conv2d { geometry });
            }
            Err(e) => {
                self.error.get_or_insert(e.in_layer(self.layers.len()));
            }
        }
        self
    }

    pub fn batchnorm(mut self) -> Self {
        self.layers.push(LayerSpec::BatchNorm {
            shape: self.current,
            eps: DEFAULT_BN_EPS,
            momentum: DEFAULT_BN_MOMENTUM,
        });
        self
    }

    pub fn relu(mut self) -> Self {
        self.layers.push(LayerSpec::Relu);
        self
    }

    pub fn finish(self, classes: usize) -> Architecture {
        self.try_finish(classes).expect("invalid architecture")
    }

    pub fn try_finish(self, classes: usize) -> Result<Architecture> {
        if let Some(e) = self.error {
            return Err(e);
        }
        if self.current.len() != classes {
            return Err(Error::shape(format!(
                "final layer produces {} outputs for {classes} classes",
                self.current.len()
            )));
        }
        Ok(Architecture {
            input: self.input,
            classes,
            layers: self.layers,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batchnorm normalises with batch statistics.
    Train,
    /// Batchnorm uses running statistics; outputs do not depend on batch composition.
    Inference,
}

/// Inputs consumed by each dense/conv layer during a forward pass, as
/// `(layer index, batch × features)`. Conv entries are the raw `C × H × W`
/// activations, not the unfolded patches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivationTrace {
    pub entries: Vec<(usize, Matrix)>,
}

impl ActivationTrace {
    pub fn get(&self, layer: usize) -> Option<&Matrix> {
        self.entries
            .iter()
            .find(|(l, _)| *l == layer)
            .map(|(_, m)| m)
    }
}

/// Gradients aligned with [`Model::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

/// Batch statistics seen by one batchnorm layer in a training pass.
#[derive(Debug, Clone)]
pub(crate) struct BatchStats {
    layer: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
    count: usize,
}

pub(crate) struct TrainPass {
    pub loss: f64,
    pub logits: Matrix,
    pub grads: Gradients,
    pub(crate) stats: Vec<BatchStats>,
}

enum Aux {
    None,
    Patches(Matrix),
    Norm { xhat: Matrix, inv_std: Vec<f64> },
}

/// Ordered layer stack with validated shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input: TensorShape,
    classes: usize,
    layers: Vec<Layer>,
    shapes: Vec<TensorShape>,
}

impl Model {
    pub fn new(input: TensorShape, classes: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        let mut cur = input;
        shapes.push(cur);
        for (i, l) in layers.iter().enumerate() {
            cur = l.output_shape(cur).map_err(|e| e.in_layer(i))?;
            shapes.push(cur);
        }
        if cur.len() != classes {
            return Err(Error::shape(format!(
                "model outputs {} values but has {classes} classes",
                cur.len()
            )));
        }
        for l in &layers {
            if l.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(Error::numeric("model parameters contain non-finite values"));
            }
        }
        Ok(Self {
            input,
            classes,
            layers,
            shapes,
        })
    }

    /// Fresh model with seeded fan-in uniform initialisation.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch
            .layers
            .iter()
            .enumerate()
            .map(|(i, s)| s.init(&mut rng).map_err(|e| e.in_layer(i)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(arch.input, arch.classes, layers)
    }

    /// Re-runs construction checks after state was written in place.
    pub(crate) fn revalidated(self) -> Result<Self> {
        Self::new(self.input, self.classes, self.layers)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input: self.input,
            classes: self.classes,
            layers: self.layers.iter().map(Layer::spec).collect(),
        }
    }

    pub fn input_shape(&self) -> TensorShape {
        self.input
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Shape entering layer `i` (`i == layers().len()` gives the output shape).
    pub fn layer_input_shape(&self, i: usize) -> TensorShape {
        self.shapes[i]
    }

    /// Indices of dense and conv layers.
    pub fn weight_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].has_weight())
            .collect()
    }

    /// Replaces the weight matrix of dense/conv layer `layer`.
    pub fn set_weight(&mut self, layer: usize, weight: Matrix) -> Result<()> {
        let slot = self
            .layers
            .get_mut(layer)
            .and_then(Layer::weight_mut)
            .ok_or_else(|| Error::validation(format!("layer {layer} has no weight matrix")))?;
        if slot.shape() != weight.shape() {
            return Err(Error::shape(format!(
                "layer {layer} weight is {:?}, replacement is {:?}",
                slot.shape(),
                weight.shape()
            )));
        }
        if !weight.is_finite() {
            return Err(Error::numeric("replacement weight is not finite"));
        }
        *slot = weight;
        Ok(())
    }

    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub(crate) fn state(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::state).collect()
    }

    pub(crate) fn state_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(Layer::state_mut).collect()
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input.len() {
            return Err(Error::shape(format!(
                "batch has {} features, model expects {}",
                batch.cols(),
                self.input.len()
            )));
        }
        Ok(())
    }

    /// Logits and the per-layer input trace for dense/conv layers.
    pub fn forward(&self, batch: &Matrix, mode: Mode) -> Result<(Matrix, ActivationTrace)> {
        self.check_batch(batch)?;
        let mut trace = ActivationTrace::default();
        let mut cur = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.has_weight() {
                trace.entries.push((i, cur.clone()));
            }
            let (out, _) = self.layer_forward(i, &cur, mode, false)?;
            cur = out;
        }
        Ok((cur, trace))
    }

    /// Inference-mode logits without keeping intermediate activations.
    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_batch(batch)?;
        let mut cur = batch.clone();
        for i in 0..self.layers.len() {
            cur = self.layer_forward(i, &cur, Mode::Inference, false)?.0;
        }
        Ok(cur)
    }

    /// Mean softmax cross-entropy of a training-mode pass and its exact gradient.
    pub fn loss_and_grads(&self, batch: &Matrix, labels: &[usize]) -> Result<(f64, Gradients)> {
        let pass = self.train_pass(batch, labels)?;
        Ok((pass.loss, pass.grads))
    }

    pub(crate) fn train_pass(&self, batch: &Matrix, labels: &[usize]) -> Result<TrainPass> {
        self.check_batch(batch)?;
        if labels.len() != batch.rows() {
            return Err(Error::shape(format!(
                "{} labels for a batch of {}",
                labels.len(),
                batch.rows()
            )));
        }
        let n = self.layers.len();
        let mut inputs: Vec<Matrix> = Vec::with_capacity(n);
        let mut aux: Vec<Aux> = Vec::with_capacity(n);
        let mut stats = Vec::new();
        let mut cur = batch.clone();
        for i in 0..n {
            let (out, a) = self.layer_forward(i, &cur, Mode::Train, true)?;
            if let (Layer::BatchNorm(_), Aux::Norm { xhat, inv_std }) = (&self.layers[i], &a) {
                stats.push(batch_stats(i, &cur, xhat, inv_std, self.shapes[i]));
            }
            inputs.push(std::mem::replace(&mut cur, out));
            aux.push(a);
        }
        let logits = cur;
        let (loss, mut grad) = softmax_cross_entropy(&logits, labels, self.classes)?;

        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
        for i in (0..n).rev() {
            let need_input_grad = i > 0;
            let (dx, g) = self.layer_backward(i, &inputs[i], &aux[i], &grad, need_input_grad)?;
            per_layer[i] = g;
            if let Some(dx) = dx {
                grad = dx;
            }
        }
        Ok(TrainPass {
            loss,
            logits,
            grads: Gradients {
                tensors: per_layer.into_iter().flatten().collect(),
            },
            stats,
        })
    }

    /// Folds batch statistics from a training pass into the running estimates.
    pub(crate) fn apply_batch_stats(&mut self, stats: &[BatchStats]) {
        for s in stats {
            if let Layer::BatchNorm(bn) = &mut self.layers[s.layer] {
                let m = bn.momentum;
                let unbias = if s.count > 1 {
                    s.count as f64 / (s.count - 1) as f64
                } else {
                    1.0
                };
                for c in 0..bn.shape.channels {
                    bn.running_mean[c] = (1.0 - m) * bn.running_mean[c] + m * s.mean[c];
                    let v = (1.0 - m) * bn.running_var[c] + m * s.var[c] * unbias;
                    bn.running_var[c] = v.max(f64::MIN_POSITIVE);
                }
            }
        }
    }

    fn layer_forward(&self, i: usize, x: &Matrix, mode: Mode, keep: bool) -> Result<(Matrix, Aux)> {
        let in_shape = self.shapes[i];
        match &self.layers[i] {
            Layer::Dense(d) => Ok((dense_forward(d, x)?, Aux::None)),
            Layer::Conv2d(c) => {
                let patches = batch_unfold(x, &c.geometry);
                let out = conv_forward(c, &patches, x.rows())?;
                Ok((
                    out,
                    if keep {
                        Aux::Patches(patches)
                    } else {
                        Aux::None
                    },
                ))
            }
            Layer::BatchNorm(bn) => Ok(batchnorm_forward(bn, x, in_shape, mode)),
            Layer::Relu => Ok((
                Matrix::from_parts(
                    x.rows(),
                    x.cols(),
                    x.data().iter().map(|&v| v.max(0.0)).collect(),
                ),
                Aux::None,
            )),
        }
    }

    /// Returns the input gradient (when requested) and parameter gradients.
    fn layer_backward(
        &self,
        i: usize,
        x: &Matrix,
        aux: &Aux,
        dy: &Matrix,
        need_input_grad: bool,
    ) -> Result<(Option<Matrix>, Vec<Vec<f64>>)> {
        match (&self.layers[i], aux) {
            (Layer::Dense(d), _) => {
                let dw = gemm(dy, Op::T, x, Op::N)?;
                let db = column_sums(dy);
                let dx = if need_input_grad {
                    Some(gemm(dy, Op::N, &d.weight, Op::N)?)
                } else {
                    None
                };
                Ok((dx, vec![dw.into_data(), db]))
            }
            (Layer::Conv2d(c), Aux::Patches(patches)) => {
                let g = &c.geometry;
                let np = g.patch_count();
                let co = g.out_channels;
                let b = x.rows();
                // Rows of `gp` are (sample, output pixel), columns output channels.
                let mut gp = Matrix::zeros(b * np, co);
                for s in 0..b {
                    let row = dy.row(s);
                    for o in 0..co {
                        for p in 0..np {
                            gp.set(s * np + p, o, row[o * np + p]);
                        }
                    }
                }
                let dw = gemm(&gp, Op::T, patches, Op::N)?;
                let db = column_sums(&gp);
                let dx = if need_input_grad {
                    let dp = gemm(&gp, Op::N, &c.weight, Op::N)?;
                    let plen = g.patch_len();
                    let mut dx = Matrix::zeros(b, x.cols());
                    for s in 0..b {
                        let src = &dp.data()[s * np * plen..(s + 1) * np * plen];
                        fold_add(src, g, dx.row_mut(s));
                    }
                    Some(dx)
                } else {
                    None
                };
                Ok((dx, vec![dw.into_data(), db]))
            }
            (Layer::BatchNorm(bn), Aux::Norm { xhat, inv_std }) => {
                let shape = self.shapes[i];
                let (dx, dgamma, dbeta) = batchnorm_backward(bn, xhat, inv_std, dy, shape);
                Ok((Some(dx), vec![dgamma, dbeta]))
            }
            (Layer::Relu, _) => {
                let data = dy
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                Ok((Some(Matrix::from_parts(dy.rows(), dy.cols(), data)), vec![]))
            }
            _ => Err(Error::numeric(format!(
                "layer {i}: training pass lost its cached state"
            ))),
        }
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    out
}

fn dense_forward(d: &Dense, x: &Matrix) -> Result<Matrix> {
    let mut out = gemm(x, Op::N, &d.weight, Op::T)?;
    for r in 0..out.rows() {
        for (o, b) in out.row_mut(r).iter_mut().zip(&d.bias) {
            *o += b;
        }
    }
    Ok(out)
}

/// Stacked patch matrices, `(batch · n_p) × C·k·k`.
fn batch_unfold(x: &Matrix, g: &ConvGeometry) -> Matrix {
    let np = g.patch_count();
    let plen = g.patch_len();
    let mut data = vec![0.0; x.rows() * np * plen];
    for s in 0..x.rows() {
        unfold_into(x.row(s), g, &mut data[s * np * plen..(s + 1) * np * plen]);
    }
    Matrix::from_parts(x.rows() * np, plen, data)
}

fn conv_forward(c: &Conv2d, patches: &Matrix, batch: usize) -> Result<Matrix> {
    let g = &c.geometry;
    let np = g.patch_count();
    let co = g.out_channels;
    let y = gemm(patches, Op::N, &c.weight, Op::T)?;
    let mut out = Matrix::zeros(batch, co * np);
    for s in 0..batch {
        let row = out.row_mut(s);
        for p in 0..np {
            let src = y.row(s * np + p);
            for o in 0..co {
                row[o * np + p] = src[o] + c.bias[o];
            }
        }
    }
    Ok(out)
}

fn batchnorm_forward(bn: &BatchNorm, x: &Matrix, shape: TensorShape, mode: Mode) -> (Matrix, Aux) {
    let (b, ch, sp) = (x.rows(), shape.channels, shape.spatial());
    let m = (b * sp) as f64;
    let mut out = Matrix::zeros(b, x.cols());
    match mode {
        Mode::Inference => {
            for c in 0..ch {
                let scale = bn.gamma[c] / (bn.running_var[c] + bn.eps).sqrt();
                let shift = bn.beta[c] - bn.running_mean[c] * scale;
                for s in 0..b {
                    let src = &x.row(s)[c * sp..(c + 1) * sp];
                    let dst = &mut out.row_mut(s)[c * sp..(c + 1) * sp];
                    for (d, v) in dst.iter_mut().zip(src) {
                        *d = v * scale + shift;
                    }
                }
            }
            (out, Aux::None)
        }
        Mode::Train => {
            let mut xhat = Matrix::zeros(b, x.cols());
            let mut inv_std = vec![0.0; ch];
            for c in 0..ch {
                let mut sum = 0.0;
                for s in 0..b {
                    sum += x.row(s)[c * sp..(c + 1) * sp].iter().sum::<f64>();
                }
                let mean = sum / m;
                let mut sq = 0.0;
                for s in 0..b {
                    sq += x.row(s)[c * sp..(c + 1) * sp]
                        .iter()
                        .map(|v| (v - mean) * (v - mean))
                        .sum::<f64>();
                }
                let var = sq / m;
                let is = 1.0 / (var + bn.eps).sqrt();
                inv_std[c] = is;
                for s in 0..b {
                    for k in c * sp..(c + 1) * sp {
                        let h = (x.row(s)[k] - mean) * is;
                        xhat.row_mut(s)[k] = h;
                        out.row_mut(s)[k] = bn.gamma[c] * h + bn.beta[c];
                    }
                }
            }
            (out, Aux::Norm { xhat, inv_std })
        }
    }
}

fn batch_stats(
    layer: usize,
    x: &Matrix,
    xhat: &Matrix,
    inv_std: &[f64],
    shape: TensorShape,
) -> BatchStats {
    let (b, ch, sp) = (x.rows(), shape.channels, shape.spatial());
    let count = b * sp;
    let mut mean = vec![0.0; ch];
    let mut var = vec![0.0; ch];
    for c in 0..ch {
        let mut sum = 0.0;
        for s in 0..b {
            sum += x.row(s)[c * sp..(c + 1) * sp].iter().sum::<f64>();
        }
        mean[c] = sum / count as f64;
        let mut sq = 0.0;
        for s in 0..b {
            sq += xhat.row(s)[c * sp..(c + 1) * sp]
                .iter()
                .map(|h| h * h)
                .sum::<f64>();
        }
        // xhat = (x - mean) * inv_std, so mean(xhat^2) * var_eps = var.
        let eps_var = 1.0 / (inv_std[c] * inv_std[c]);
        var[c] = sq / count as f64 * eps_var;
    }
    BatchStats {
        layer,
        mean,
        var,
        count,
    }
}

fn batchnorm_backward(
    bn: &BatchNorm,
    xhat: &Matrix,
    inv_std: &[f64],
    dy: &Matrix,
    shape: TensorShape,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (b, ch, sp) = (dy.rows(), shape.channels, shape.spatial());
    let m = (b * sp) as f64;
    let mut dx = Matrix::zeros(b, dy.cols());
    let mut dgamma = vec![0.0; ch];
    let mut dbeta = vec![0.0; ch];
    for c in 0..ch {
        let (mut sdy, mut sdyx) = (0.0, 0.0);
        for s in 0..b {
            for k in c * sp..(c + 1) * sp {
                let g = dy.row(s)[k];
                sdy += g;
                sdyx += g * xhat.row(s)[k];
            }
        }
        dgamma[c] = sdyx;
        dbeta[c] = sdy;
        let f = bn.gamma[c] * inv_std[c] / m;
        for s in 0..b {
            for k in c * sp..(c + 1) * sp {
                let g = dy.row(s)[k];
                dx.row_mut(s)[k] = f * (m * g - sdy - xhat.row(s)[k] * sdyx);
            }
        }
    }
    (dx, dgamma, dbeta)
}
