//! Label-noise transition matrices and label corruption.
//!
//! Entry `t[i][j]` is the probability that a sample of clean class `i` is
//! observed as class `j`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Row-stochastic `K × K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    t: Matrix,
}

impl TransitionMatrix {
    /// Validates probabilities in `[0, 1]` and unit row sums (to 1e-12).
    pub fn new(t: Matrix) -> Result<Self> {
        if t.rows() != t.cols() || t.rows() < 2 {
            return Err(Error::validation(format!(
                "transition matrix must be square with K >= 2, got {}x{}",
                t.rows(),
                t.cols()
            )));
        }
        for i in 0..t.rows() {
            let row = t.row(i);
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::validation(format!(
                    "row {i} has an entry outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::validation(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self { t })
    }

    pub fn k(&self) -> usize {
        self.t.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.t
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.t.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.t.row(i)
    }

    pub fn is_identity(&self) -> bool {
        (0..self.k()).all(|i| self.t.get(i, i) == 1.0)
    }

    /// Draws the observed label for clean class `i` given `u ∈ [0, 1)`.
    fn sample_row(&self, i: usize, u: f64) -> usize {
        let row = self.row(i);
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // Rounding left u above the last partial sum.
        row.iter().rposition(|&p| p > 0.0).unwrap_or(i)
    }
}

fn check_k_eta(k: usize, eta: f64) -> Result<()> {
    if k < 2 {
        return Err(Error::validation(format!(
            "need at least 2 classes, got {k}"
        )));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::validation(format!(
            "noise level {eta} must lie in [0, 1)"
        )));
    }
    Ok(())
}

/// Flip to every other class with probability `eta / (K - 1)`.
pub fn symmetric(k: usize, eta: f64) -> Result<TransitionMatrix> {
    check_k_eta(k, eta)?;
    let off = eta / (k - 1) as f64;
    let t = Matrix::from_fn(k, k, |i, j| if i == j { 1.0 - eta } else { off });
    TransitionMatrix::new(t)
}

/// Off-diagonal entries drawn i.i.d. from `U(0, 2·eta / (K - 1))`; each
/// diagonal closes its row. Rows whose off-diagonal mass exceeds 1 are
/// rejected rather than renormalised.
pub fn asymmetric(k: usize, eta: f64, seed: u64) -> Result<TransitionMatrix> {
    check_k_eta(k, eta)?;
    let upper = 2.0 * eta / (k - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Matrix::zeros(k, k);
    for i in 0..k {
        let mut off_sum = 0.0;
        for j in 0..k {
            if i != j {
                let v = rng.random::<f64>() * upper;
                t.set(i, j, v);
                off_sum += v;
            }
        }
        let diag = 1.0 - off_sum;
        if diag < 0.0 {
            return Err(Error::validation(format!(
                "row {i}: sampled off-diagonal mass {off_sum} exceeds 1 (eta too large for K = {k})"
            )));
        }
        t.set(i, i, diag);
    }
    TransitionMatrix::new(t)
}

/// For each class `i`, the classes `g_i` it can be confused with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyGroups {
    groups: Vec<Vec<usize>>,
}

impl HierarchyGroups {
    /// `groups[i]` lists the confusable classes of class `i`.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let k = groups.len();
        for (i, g) in groups.iter().enumerate() {
            for (pos, &j) in g.iter().enumerate() {
                if j >= k {
                    return Err(Error::validation(format!(
                        "class {i}: group member {j} is not a class in [0, {k})"
                    )));
                }
                if j == i {
                    return Err(Error::validation(format!(
                        "class {i} cannot be in its own confusion group"
                    )));
                }
                if g[..pos].contains(&j) {
                    return Err(Error::validation(format!(
                        "class {i}: group member {j} is listed twice"
                    )));
                }
            }
        }
        Ok(Self { groups })
    }

    /// Every class in a cluster is confusable with every other member of it.
    /// Classes outside all clusters get empty groups.
    pub fn from_clusters(k: usize, clusters: &[Vec<usize>]) -> Result<Self> {
        let mut groups = vec![Vec::new(); k];
        for cluster in clusters {
            for &c in cluster {
                if c >= k {
                    return Err(Error::validation(format!(
                        "cluster member {c} is not a class in [0, {k})"
                    )));
                }
                if !groups[c].is_empty() {
                    return Err(Error::validation(format!(
                        "class {c} appears in more than one cluster"
                    )));
                }
            }
            for &c in cluster {
                groups[c] = cluster.iter().copied().filter(|&o| o != c).collect();
            }
        }
        Self::new(groups)
    }

    /// Confusion pairs `{cat, dog}` and `{automobile, truck}` for CIFAR-10.
    pub fn cifar10_pairs() -> Self {
        Self::from_clusters(10, &[vec![3, 5], vec![1, 9]]).expect("valid CIFAR-10 pairs")
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }
}

/// Mass `eta` spread evenly over `g_i`; classes with an empty group keep
/// their label.
pub fn hierarchical(k: usize, eta: f64, groups: &HierarchyGroups) -> Result<TransitionMatrix> {
    check_k_eta(k, eta)?;
    if groups.k() != k {
        return Err(Error::validation(format!(
            "hierarchy describes {} classes, expected {k}",
            groups.k()
        )));
    }
    let mut t = Matrix::zeros(k, k);
    for i in 0..k {
        let g = groups.group(i);
        if g.is_empty() {
            t.set(i, i, 1.0);
            continue;
        }
        let share = eta / g.len() as f64;
        let mut off = 0.0;
        for &j in g {
            t.set(i, j, share);
            off += share;
        }
        t.set(i, i, 1.0 - off);
    }
    TransitionMatrix::new(t)
}

/// Per-sample uniform variate from a counter-based stream, independent of
/// dataset order: stream `index` of a ChaCha generator keyed by `seed`.
fn sample_uniform(seed: u64, index: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.random::<f64>()
}

/// Resamples every observed label from its row of `t`. Previous clean labels
/// (if any) are kept in the true-label channel, otherwise the current labels
/// become the true labels.
pub fn corrupt(data: &LabeledDataset, t: &TransitionMatrix, seed: u64) -> Result<LabeledDataset> {
    if t.k() != data.classes() {
        return Err(Error::validation(format!(
            "transition matrix has K = {}, dataset has {} classes",
            t.k(),
            data.classes()
        )));
    }
    let labels = data
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &y)| t.sample_row(y, sample_uniform(seed, i)))
        .collect();
    data.relabeled(labels)
}
