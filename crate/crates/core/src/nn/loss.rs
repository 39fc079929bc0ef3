use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn check_labels(logits: &Matrix, labels: &[usize], classes: usize) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::shape(format!(
            "{} labels for {} rows of logits",
            labels.len(),
            logits.rows()
        )));
    }
    if logits.cols() != classes {
        return Err(Error::shape(format!(
            "logits have {} columns for {classes} classes",
            logits.cols()
        )));
    }
    if let Some(i) = labels.iter().position(|&l| l >= classes) {
        return Err(Error::validation(format!(
            "label {} at position {i} is outside [0, {classes})",
            labels[i]
        )));
    }
    Ok(())
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy of each row against its label.
pub fn per_row_cross_entropy(
    logits: &Matrix,
    labels: &[usize],
    classes: usize,
) -> Result<Vec<f64>> {
    check_labels(logits, labels, classes)?;
    Ok((0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            log_sum_exp(row) - row[labels[r]]
        })
        .collect())
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(
    logits: &Matrix,
    labels: &[usize],
    classes: usize,
) -> Result<(f64, Matrix)> {
    check_labels(logits, labels, classes)?;
    let n = logits.rows();
    if n == 0 {
        return Err(Error::validation("cross-entropy of an empty batch"));
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, classes);
    let mut total = 0.0;
    for r in 0..n {
        let row = logits.row(r);
        let lse = log_sum_exp(row);
        total += lse - row[labels[r]];
        let g = grad.row_mut(r);
        for (gc, &z) in g.iter_mut().zip(row) {
            *gc = (z - lse).exp() * inv_n;
        }
        g[labels[r]] -= inv_n;
    }
    Ok((total * inv_n, grad))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
