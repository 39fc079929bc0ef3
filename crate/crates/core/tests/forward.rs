//! Forward pass, loss, and evaluation against straight-line oracles.

#![allow(clippy::needless_range_loop)]

mod common;

use common::{direct_conv, random_matrix, rng};
use rand::Rng;
use sap_unlearn::data::LabeledDataset;
use sap_unlearn::linalg::{ConvGeometry, Matrix, TensorShape};
use sap_unlearn::nn::{
    evaluate, per_sample_losses, train, Architecture, BatchNorm, Conv2d, Dense, Layer, Mode, Model,
    TrainConfig,
};

fn dense(weight: Matrix, bias: Vec<f64>) -> Layer {
    Layer::Dense(Dense { weight, bias })
}

fn random_vec(n: usize, lo: f64, hi: f64, r: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

#[test]
fn identity_network() {
    let m = Model::new(
        TensorShape::flat(3),
        3,
        vec![dense(Matrix::identity(3), vec![0.0; 3])],
    )
    .unwrap();
    let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.0, 3.0, 4.0]]).unwrap();
    assert_eq!(m.logits(&x).unwrap(), x);
}

#[test]
fn relu_after_identity() {
    let m = Model::new(
        TensorShape::flat(2),
        2,
        vec![dense(Matrix::identity(2), vec![0.0; 2]), Layer::Relu],
    )
    .unwrap();
    let x = Matrix::from_rows(&[[-1.0, 2.0]]).unwrap();
    assert_eq!(m.logits(&x).unwrap().data(), &[0.0, 2.0]);
}

/// Dense → BatchNorm (running statistics) → ReLU → Dense, written out per sample.
#[test]
fn dense_stack_matches_straight_line_oracle() {
    let mut r = rng(3);
    let (f_in, h, k) = (5, 7, 3);
    let w1 = random_matrix(h, f_in, &mut r);
    let b1 = random_vec(h, -1.0, 1.0, &mut r);
    let gamma = random_vec(h, 0.5, 1.5, &mut r);
    let beta = random_vec(h, -0.5, 0.5, &mut r);
    let mean = random_vec(h, -0.3, 0.3, &mut r);
    let var = random_vec(h, 0.2, 2.0, &mut r);
    let w2 = random_matrix(k, h, &mut r);
    let b2 = random_vec(k, -1.0, 1.0, &mut r);
    let bn = BatchNorm {
        shape: TensorShape::flat(h),
        gamma: gamma.clone(),
        beta: beta.clone(),
        running_mean: mean.clone(),
        running_var: var.clone(),
        eps: 1e-5,
        momentum: 0.1,
    };
    let m = Model::new(
        TensorShape::flat(f_in),
        k,
        vec![
            dense(w1.clone(), b1.clone()),
            Layer::BatchNorm(bn),
            Layer::Relu,
            dense(w2.clone(), b2.clone()),
        ],
    )
    .unwrap();
    let x = random_matrix(6, f_in, &mut r);
    let (logits, trace) = m.forward(&x, Mode::Inference).unwrap();

    for s in 0..x.rows() {
        let mut hidden = vec![0.0; h];
        for j in 0..h {
            let mut z = b1[j];
            for i in 0..f_in {
                z += x.get(s, i) * w1.get(j, i);
            }
            let z = gamma[j] * (z - mean[j]) / (var[j] + 1e-5).sqrt() + beta[j];
            hidden[j] = z.max(0.0);
        }
        for c in 0..k {
            let mut z = b2[c];
            for j in 0..h {
                z += hidden[j] * w2.get(c, j);
            }
            assert!((logits.get(s, c) - z).abs() <= 1e-12);
        }
        let consumed = trace.get(3).unwrap();
        for j in 0..h {
            assert!((consumed.get(s, j) - hidden[j]).abs() <= 1e-12);
        }
    }
    assert_eq!(trace.get(0).unwrap(), &x);
    assert_eq!(trace.entries.len(), 2);
}

#[test]
fn conv_stack_matches_direct_convolution() {
    let mut r = rng(8);
    let g = ConvGeometry::new(2, 3, 3, 2, 1, 6, 5).unwrap();
    let kdata = random_vec(3 * 2 * 9, -1.0, 1.0, &mut r);
    let cb = random_vec(3, -0.5, 0.5, &mut r);
    let out = g.output_shape();
    let w2 = random_matrix(2, out.len(), &mut r);
    let m = Model::new(
        g.input_shape(),
        2,
        vec![
            Layer::Conv2d(Conv2d {
                geometry: g,
                weight: Matrix::new(3, 18, kdata.clone()).unwrap(),
                bias: cb.clone(),
            }),
            Layer::Relu,
            dense(w2.clone(), vec![0.0; 2]),
        ],
    )
    .unwrap();
    let x = random_matrix(4, g.input_shape().len(), &mut r);
    let (logits, trace) = m.forward(&x, Mode::Inference).unwrap();
    assert_eq!(trace.get(0).unwrap(), &x);
    let np = out.spatial();
    for s in 0..x.rows() {
        let mut act = direct_conv(x.row(s), 2, 6, 5, &kdata, 3, 3, 2, 1);
        for (i, a) in act.iter_mut().enumerate() {
            *a = (*a + cb[i / np]).max(0.0);
        }
        for c in 0..2 {
            let z: f64 = act.iter().enumerate().map(|(j, a)| a * w2.get(c, j)).sum();
            assert!((logits.get(s, c) - z).abs() <= 1e-12);
        }
        let consumed = trace.get(2).unwrap().row(s);
        for (a, b) in consumed.iter().zip(&act) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

fn trained_bn_model() -> (Model, LabeledDataset) {
    let mut r = rng(21);
    let x = random_matrix(90, 4, &mut r);
    let y = (0..90)
        .map(|i| usize::from(x.get(i, 0) + x.get(i, 1) > 0.0) + 2 * usize::from(x.get(i, 2) > 0.3))
        .collect();
    let d = LabeledDataset::new(x, TensorShape::flat(4), y, None, 4).unwrap();
    let init = Model::init(&Architecture::mlp(4, &[12, 9], 4, true), 5).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.05,
        batch_size: 16,
        epochs: 5,
        ..Default::default()
    };
    (train(&init, &d, &cfg).unwrap().0, d)
}

#[test]
fn per_sample_losses_ignore_batching() {
    let (m, d) = trained_bn_model();
    let all = per_sample_losses(&m, &d).unwrap();
    for i in 0..d.len() {
        let one = per_sample_losses(&m, &d.subset(&[i])).unwrap();
        assert!((one[0] - all[i]).abs() <= 1e-12, "sample {i}");
    }
    let dup = per_sample_losses(&m, &d.subset(&[7, 7, 7])).unwrap();
    assert_eq!(dup[0], dup[1]);
    assert_eq!(dup[1], dup[2]);
}

#[test]
fn evaluate_matches_recount() {
    let (m, d) = trained_bn_model();
    let e = evaluate(&m, &d).unwrap();
    let logits = m.logits(d.samples()).unwrap();
    let mut correct = 0;
    let mut loss = 0.0;
    for i in 0..d.len() {
        let row = logits.row(i);
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        correct += usize::from(best == d.labels()[i]);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        loss += lse - row[d.labels()[i]];
    }
    assert_eq!(e.correct, correct);
    assert_eq!(e.total, d.len());
    assert_eq!(e.accuracy, correct as f64 / d.len() as f64);
    assert!((e.loss - loss / d.len() as f64).abs() <= 1e-12);
}

#[test]
fn constant_logits_predict_class_zero() {
    let m = Model::new(
        TensorShape::flat(2),
        2,
        vec![dense(Matrix::zeros(2, 2), vec![0.0; 2])],
    )
    .unwrap();
    let x = Matrix::from_fn(10, 2, |i, j| (i + j) as f64);
    let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 3)).collect();
    let d = LabeledDataset::new(x, TensorShape::flat(2), labels, None, 2).unwrap();
    let e = evaluate(&m, &d).unwrap();
    assert_eq!(e.accuracy, 0.3);
    assert!((e.loss - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn uniform_ten_class_loss() {
    let m = Model::new(
        TensorShape::flat(1),
        10,
        vec![dense(Matrix::zeros(10, 1), vec![0.0; 10])],
    )
    .unwrap();
    let d =
        LabeledDataset::new(Matrix::zeros(1, 1), TensorShape::flat(1), vec![4], None, 10).unwrap();
    assert!((per_sample_losses(&m, &d).unwrap()[0] - 10f64.ln()).abs() < 1e-15);
}

#[test]
fn shape_and_label_errors() {
    let m = Model::init(&Architecture::mlp(3, &[4], 2, false), 0).unwrap();
    assert!(m.logits(&Matrix::zeros(2, 4)).is_err());
    assert!(m.loss_and_grads(&Matrix::zeros(1, 3), &[2]).is_err());
    assert!(evaluate(
        &m,
        &LabeledDataset::new(Matrix::zeros(0, 3), TensorShape::flat(3), vec![], None, 2).unwrap()
    )
    .is_err());
}
