use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{per_sample_losses, Model};

/// The lowest-loss training samples, in non-decreasing loss order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustedSet {
    pub indices: Vec<usize>,
    pub losses: Vec<f64>,
    /// The size that was asked for.
    pub requested: usize,
    /// Set when `requested` exceeded the dataset and the set was clamped.
    pub clamped: bool,
}

impl TrustedSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Fraction of members whose observed label is clean, when known.
    pub fn purity(&self, data: &LabeledDataset) -> Option<f64> {
        data.purity(&self.indices)
    }
}

/// Picks the `n_trust` samples with smallest loss; ties go to the lower index.
pub fn select_lowest(losses: &[f64], n_trust: usize) -> Result<TrustedSet> {
    if n_trust == 0 {
        return Err(Error::validation("n_trust must be at least 1"));
    }
    if losses.is_empty() {
        return Err(Error::validation(
            "cannot select trusted samples from an empty dataset",
        ));
    }
    if losses.iter().any(|l| l.is_nan()) {
        return Err(Error::numeric("per-sample loss is NaN"));
    }
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));
    let size = n_trust.min(losses.len());
    order.truncate(size);
    Ok(TrustedSet {
        losses: order.iter().map(|&i| losses[i]).collect(),
        indices: order,
        requested: n_trust,
        clamped: n_trust > losses.len(),
    })
}

/// Trusted-set estimation from the model's own cross-entropy.
pub fn get_trusted(model: &Model, data: &LabeledDataset, n_trust: usize) -> Result<TrustedSet> {
    let losses = per_sample_losses(model, data)?;
    select_lowest(&losses, n_trust)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_smallest() {
        let t = select_lowest(&[0.5, 0.05, 0.1], 2).unwrap();
        assert_eq!(t.indices, vec![1, 2]);
        assert_eq!(t.losses, vec![0.05, 0.1]);
        assert!(!t.clamped);
    }

    #[test]
    fn full_and_clamped() {
        let l = [0.3, 0.2, 0.1];
        let t = select_lowest(&l, 3).unwrap();
        assert_eq!(t.indices, vec![2, 1, 0]);
        let c = select_lowest(&l, 10).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.clamped);
        assert_eq!(c.requested, 10);
    }

    #[test]
    fn stable_ties() {
        let t = select_lowest(&[1.0; 6], 3).unwrap();
        assert_eq!(t.indices, vec![0, 1, 2]);
    }

    #[test]
    fn zero_request() {
        assert!(matches!(
            select_lowest(&[1.0], 0),
            Err(Error::Validation(_))
        ));
    }
}
