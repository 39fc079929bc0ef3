use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::loss::{argmax, per_row_cross_entropy};
use crate::nn::model::{Gradients, Model};

/// Rows evaluated per inference chunk.
const EVAL_CHUNK: usize = 1024;

/// Multiplies the learning rate by `factor` once the epoch loss has gone
/// more than `patience` epochs without beating the best loss by a relative
/// margin of `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.7,
            patience: 5,
            threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub plateau: Option<PlateauConfig>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.0,
            nesterov: false,
            weight_decay: 0.0,
            batch_size: 512,
            epochs: 250,
            plateau: Some(PlateauConfig::default()),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation("momentum must lie in [0, 1)"));
        }
        if self.nesterov && self.momentum == 0.0 {
            return Err(Error::validation("nesterov momentum needs momentum > 0"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::validation("weight_decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if let Some(p) = &self.plateau {
            if !(p.factor > 0.0 && p.factor < 1.0) {
                return Err(Error::validation("plateau factor must lie in (0, 1)"));
            }
            if !(p.threshold >= 0.0) {
                return Err(Error::validation("plateau threshold must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

struct Plateau {
    cfg: PlateauConfig,
    best: f64,
    bad_epochs: usize,
}

impl Plateau {
    fn new(cfg: PlateauConfig) -> Self {
        Self {
            cfg,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Returns the learning rate to use for the next epoch.
    fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best * (1.0 - self.cfg.threshold) {
            self.best = loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.cfg.patience {
            self.bad_epochs = 0;
            return lr * self.cfg.factor;
        }
        lr
    }
}

/// Momentum SGD with optional Nesterov look-ahead and L2 weight decay.
struct Sgd {
    momentum: f64,
    nesterov: bool,
    weight_decay: f64,
    velocity: Option<Vec<Vec<f64>>>,
}

impl Sgd {
    fn step(&mut self, model: &mut Model, grads: &Gradients, lr: f64) {
        let params = model.parameters_mut();
        debug_assert_eq!(params.len(), grads.tensors.len());
        let first = self.velocity.is_none();
        let vel = self
            .velocity
            .get_or_insert_with(|| grads.tensors.iter().map(|g| vec![0.0; g.len()]).collect());
        for ((p, g), v) in params.into_iter().zip(&grads.tensors).zip(vel.iter_mut()) {
            for ((pi, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                let mut d = gi + self.weight_decay * *pi;
                if self.momentum > 0.0 {
                    *vi = if first { d } else { self.momentum * *vi + d };
                    d = if self.nesterov {
                        d + self.momentum * *vi
                    } else {
                        *vi
                    };
                }
                *pi -= lr * d;
            }
        }
    }
}

/// Mini-batch SGD on softmax cross-entropy. Deterministic given `cfg.seed`.
pub fn train(
    model: &Model,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::validation("cannot train on an empty dataset"));
    }
    if data.classes() != model.classes() || data.shape().len() != model.input_shape().len() {
        return Err(Error::shape(format!(
            "dataset ({} features, {} classes) does not fit model ({} inputs, {} classes)",
            data.shape().len(),
            data.classes(),
            model.input_shape().len(),
            model.classes()
        )));
    }
    let mut model = model.clone();
    let mut history = TrainHistory::default();
    let mut sgd = Sgd {
        momentum: cfg.momentum,
        nesterov: cfg.nesterov,
        weight_decay: cfg.weight_decay,
        velocity: None,
    };
    let mut plateau = cfg.plateau.map(Plateau::new);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lr = cfg.learning_rate;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let labels = data.labels();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.samples().select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let pass = model.train_pass(&x, &y)?;
            if !pass.loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("loss became {}", pass.loss),
                });
            }
            loss_sum += pass.loss * chunk.len() as f64;
            correct += (0..chunk.len())
                .filter(|&r| argmax(pass.logits.row(r)) == y[r])
                .count();
            sgd.step(&mut model, &pass.grads, lr);
            model.apply_batch_stats(&pass.stats);
        }
        if model
            .parameters()
            .iter()
            .any(|p| p.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Training {
                epoch,
                reason: "parameters became non-finite".into(),
            });
        }
        let loss = loss_sum / data.len() as f64;
        history.epochs.push(EpochStats {
            epoch,
            loss,
            accuracy: correct as f64 / data.len() as f64,
            learning_rate: lr,
        });
        if let Some(p) = plateau.as_mut() {
            lr = p.observe(loss, lr);
        }
    }
    Ok((model, history))
}

/// Continues training an existing model on a retain set. Same contract as
/// [`train`]; the fresh optimiser state starts from the given weights.
pub fn finetune(model: &Model, retain: &LabeledDataset, cfg: &TrainConfig) -> Result<Model> {
    train(model, retain, cfg).map(|(m, _)| m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub correct: usize,
    pub total: usize,
}

fn check_fit(model: &Model, data: &LabeledDataset) -> Result<()> {
    if data.classes() != model.classes() || data.shape().len() != model.input_shape().len() {
        return Err(Error::shape("dataset does not fit the model"));
    }
    Ok(())
}

/// Inference-mode logits for every row of `samples`, computed in chunks.
pub fn predict_logits(model: &Model, samples: &Matrix) -> Result<Matrix> {
    let mut data = Vec::with_capacity(samples.rows() * model.classes());
    let idx: Vec<usize> = (0..samples.rows()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let z = model.logits(&samples.select_rows(chunk))?;
        data.extend_from_slice(z.data());
    }
    Ok(Matrix::from_parts(samples.rows(), model.classes(), data))
}

/// Argmax class per row, ties to the lowest index.
pub fn predict(model: &Model, samples: &Matrix) -> Result<Vec<usize>> {
    let z = predict_logits(model, samples)?;
    Ok((0..z.rows()).map(|r| argmax(z.row(r))).collect())
}

/// Accuracy against observed labels and mean cross-entropy, in inference mode.
pub fn evaluate(model: &Model, data: &LabeledDataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::validation("cannot evaluate on an empty dataset"));
    }
    check_fit(model, data)?;
    let z = predict_logits(model, data.samples())?;
    let losses = per_row_cross_entropy(&z, data.labels(), data.classes())?;
    let correct = (0..z.rows())
        .filter(|&r| argmax(z.row(r)) == data.labels()[r])
        .count();
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        loss: losses.iter().sum::<f64>() / data.len() as f64,
        correct,
        total: data.len(),
    })
}

/// Cross-entropy of every sample on its own (inference-mode batchnorm).
pub fn per_sample_losses(model: &Model, data: &LabeledDataset) -> Result<Vec<f64>> {
    check_fit(model, data)?;
    let z = predict_logits(model, data.samples())?;
    per_row_cross_entropy(&z, data.labels(), data.classes())
}
