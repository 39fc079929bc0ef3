use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{unfold, Matrix};
use crate::nn::{Layer, Mode, Model};
use crate::sap::TrustedSet;

/// Input activations of one dense/conv layer over the trusted set, stored
/// `features × columns`. Dense columns are samples; conv columns are
/// unfolded patches, sample by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRepresentation {
    pub layer: usize,
    pub matrix: Matrix,
}

/// Patch positions kept out of `n_p` when at most `cap` are allowed:
/// `floor(j · n_p / cap)` for `j < cap`.
pub fn patch_subsample(n_p: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(c) if c < n_p => (0..c).map(|j| j * n_p / c).collect(),
        _ => (0..n_p).collect(),
    }
}

/// Collects one representation matrix per dense/conv layer from the
/// unmodified model in inference mode.
pub fn representation(
    model: &Model,
    trusted: &TrustedSet,
    data: &LabeledDataset,
    patch_cap: Option<usize>,
) -> Result<Vec<LayerRepresentation>> {
    if trusted.is_empty() {
        return Err(Error::validation("trusted set is empty"));
    }
    if let Some(&bad) = trusted.indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::validation(format!(
            "trusted index {bad} is outside the dataset"
        )));
    }
    if patch_cap == Some(0) {
        return Err(Error::validation("patch_cap must be at least 1"));
    }
    let batch = data.samples().select_rows(&trusted.indices);
    let (_, trace) = model.forward(&batch, Mode::Inference)?;

    let mut out = Vec::with_capacity(trace.entries.len());
    for (layer, acts) in trace.entries {
        let matrix = match &model.layers()[layer] {
            Layer::Dense(_) => acts.transpose(),
            Layer::Conv2d(c) => {
                let g = &c.geometry;
                let keep = patch_subsample(g.patch_count(), patch_cap);
                let plen = g.patch_len();
                let cols = acts.rows() * keep.len();
                let mut m = Matrix::zeros(plen, cols);
                let mut col = 0;
                for s in 0..acts.rows() {
                    let patches = unfold(acts.row(s), g).map_err(|e| e.in_layer(layer))?;
                    for &p in &keep {
                        for (f, &v) in patches.row(p).iter().enumerate() {
                            m.set(f, col, v);
                        }
                        col += 1;
                    }
                }
                m
            }
            _ => unreachable!("trace only records weight layers"),
        };
        out.push(LayerRepresentation { layer, matrix });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_stride() {
        assert_eq!(patch_subsample(4, None), vec![0, 1, 2, 3]);
        assert_eq!(patch_subsample(4, Some(10)), vec![0, 1, 2, 3]);
        assert_eq!(patch_subsample(10, Some(4)), vec![0, 2, 5, 7]);
        assert_eq!(patch_subsample(1024, Some(64)).len(), 64);
    }
}
