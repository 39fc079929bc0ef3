//! Scaled activation projection.
//!
//! Given a model trained on noisily labelled data:
//!
//! 1. take the `n_trust` training samples with the lowest cross-entropy;
//! 2. record the input activations of every dense/conv layer on them
//!    (unfolded patches for convolutions), all from the original model;
//! 3. per layer, decompose the representation `R = U Σ Vᵀ`;
//! 4. turn the explained-variance fractions into importances
//!    `λᵢ = α σ̃ᵢ / ((α − 1) σ̃ᵢ + 1)`;
//! 5. form `W_p = U Λ Uᵀ` and replace the weight by `W W_pᵀ`.
//!
//! Biases and batchnorm state are left untouched. Steps 1–3 do not depend
//! on `α`, so [`SpectralCache`] keeps them for sweeps.

mod projection;
mod representation;
mod trusted;

use serde::{Deserialize, Serialize};

pub use projection::{
    importance, normalized_singular_values, projection_matrix, scale_importance, update_parameter,
    Importance, ORTHONORMAL_TOLERANCE,
};
pub use representation::{patch_subsample, representation, LayerRepresentation};
pub use trusted::{get_trusted, select_lowest, TrustedSet};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::nn::Model;

pub const DEFAULT_ALPHA: f64 = 30_000.0;
pub const DEFAULT_N_TRUST: usize = 1000;
pub const DEFAULT_PATCH_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SapConfig {
    pub alpha: f64,
    pub n_trust: usize,
    /// Patches kept per sample for conv layers; `None` keeps all of them.
    pub patch_cap: Option<usize>,
}

impl Default for SapConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            n_trust: DEFAULT_N_TRUST,
            patch_cap: Some(DEFAULT_PATCH_CAP),
        }
    }
}

/// Left singular basis and spectrum of one layer's representation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpectrum {
    pub layer: usize,
    /// `d × r` with `d` the layer's input feature length.
    pub basis: Matrix,
    pub sigma: Vec<f64>,
}

impl LayerSpectrum {
    pub fn dim(&self) -> usize {
        self.basis.rows()
    }
}

/// Everything SAP computes before `α` enters.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCache {
    pub trusted: TrustedSet,
    pub spectra: Vec<LayerSpectrum>,
}

/// Per-layer output of one SAP application.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerProjection {
    pub layer: usize,
    pub basis: Matrix,
    pub sigma: Vec<f64>,
    pub normalized: Vec<f64>,
    pub lambda: Vec<f64>,
    pub alignment: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBundle {
    pub alpha: f64,
    pub layers: Vec<LayerProjection>,
}

impl ProjectionBundle {
    pub fn layer(&self, layer: usize) -> Option<&LayerProjection> {
        self.layers.iter().find(|p| p.layer == layer)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SapOutcome {
    pub model: Model,
    pub bundle: ProjectionBundle,
    pub trusted: TrustedSet,
}

/// Decomposes each representation matrix.
pub fn spectra(reps: &[LayerRepresentation]) -> Result<Vec<LayerSpectrum>> {
    reps.iter()
        .map(|r| {
            let s = svd(&r.matrix).map_err(|e| e.in_layer(r.layer))?;
            Ok(LayerSpectrum {
                layer: r.layer,
                basis: s.u,
                sigma: s.sigma,
            })
        })
        .collect()
}

/// Trusted-set selection, representation collection, and SVD.
pub fn prepare(
    model: &Model,
    data: &LabeledDataset,
    n_trust: usize,
    patch_cap: Option<usize>,
) -> Result<SpectralCache> {
    let trusted = get_trusted(model, data, n_trust)?;
    let reps = representation(model, &trusted, data, patch_cap)?;
    Ok(SpectralCache {
        trusted,
        spectra: spectra(&reps)?,
    })
}

/// Alignment matrix for every cached layer at scaling coefficient `alpha`.
pub fn projections(cache: &SpectralCache, alpha: f64) -> Result<ProjectionBundle> {
    let layers = cache
        .spectra
        .iter()
        .map(|s| {
            let wrap = |e: Error| e.in_layer(s.layer);
            let imp = scale_importance(&s.sigma, alpha, s.dim()).map_err(wrap)?;
            let alignment = projection_matrix(&s.basis, &imp.lambda).map_err(wrap)?;
            Ok(LayerProjection {
                layer: s.layer,
                basis: s.basis.clone(),
                sigma: s.sigma.clone(),
                normalized: imp.normalized,
                lambda: imp.lambda,
                alignment,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectionBundle { alpha, layers })
}

/// Absorbs every alignment matrix of `bundle` into the matching layer weight.
pub fn apply_bundle(model: &Model, bundle: &ProjectionBundle) -> Result<Model> {
    let mut out = model.clone();
    for p in &bundle.layers {
        let w = model.layers()[p.layer]
            .weight()
            .ok_or_else(|| Error::validation(format!("layer {} has no weight", p.layer)))?;
        let updated = update_parameter(w, &p.alignment).map_err(|e| e.in_layer(p.layer))?;
        out.set_weight(p.layer, updated)?;
    }
    Ok(out)
}

/// Applies SAP at `alpha` using cached spectra.
pub fn apply_cached(model: &Model, cache: &SpectralCache, alpha: f64) -> Result<SapOutcome> {
    let bundle = projections(cache, alpha)?;
    Ok(SapOutcome {
        model: apply_bundle(model, &bundle)?,
        bundle,
        trusted: cache.trusted.clone(),
    })
}

/// One-shot SAP update of a trained model.
pub fn sap(model: &Model, data: &LabeledDataset, cfg: &SapConfig) -> Result<SapOutcome> {
    if !(cfg.alpha > 0.0 && cfg.alpha.is_finite()) {
        return Err(Error::validation(format!(
            "scaling coefficient {} must be positive and finite",
            cfg.alpha
        )));
    }
    let cache = prepare(model, data, cfg.n_trust, cfg.patch_cap)?;
    apply_cached(model, &cache, cfg.alpha)
}
