use crate::error::{Error, Result};
use crate::linalg::{gemm, orthonormality_defect, Matrix, Op};

/// Largest tolerated `‖UᵀU − I‖_max` for a basis handed to [`projection_matrix`].
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-8;

/// Normalised singular values and the importance diagonal derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Importance {
    /// `σᵢ² / Σⱼ σⱼ²`, zero-padded to the ambient dimension.
    pub normalized: Vec<f64>,
    /// `α σ̃ᵢ / ((α − 1) σ̃ᵢ + 1)`, same length as `normalized`.
    pub lambda: Vec<f64>,
}

/// Fractions of squared singular mass, padded with zeros to length `d`.
pub fn normalized_singular_values(sigma: &[f64], d: usize) -> Result<Vec<f64>> {
    if sigma.len() > d {
        return Err(Error::shape(format!(
            "{} singular values exceed ambient dimension {d}",
            sigma.len()
        )));
    }
    if sigma.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
        return Err(Error::validation(
            "singular values must be finite and non-negative",
        ));
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::Degenerate(
            "all singular values are zero; the representations carry no signal".into(),
        ));
    }
    let mut out: Vec<f64> = sigma.iter().map(|s| s * s / total).collect();
    out.resize(d, 0.0);
    Ok(out)
}

/// Importance weight for one normalised singular value.
#[inline]
pub fn importance(normalized: f64, alpha: f64) -> f64 {
    let lambda = alpha * normalized / (alpha * normalized + (1.0 - normalized));
    lambda.clamp(0.0, 1.0)
}

/// Maps singular values to the importance diagonal at scaling coefficient `alpha`.
pub fn scale_importance(sigma: &[f64], alpha: f64, d: usize) -> Result<Importance> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::validation(format!(
            "scaling coefficient {alpha} must be positive and finite"
        )));
    }
    let normalized = normalized_singular_values(sigma, d)?;
    let lambda = normalized.iter().map(|&s| importance(s, alpha)).collect();
    Ok(Importance { normalized, lambda })
}

/// `U · diag(λ) · Uᵀ`, symmetrised. `lambda` may be longer than the number
/// of basis columns as long as the extra entries are zero.
pub fn projection_matrix(u: &Matrix, lambda: &[f64]) -> Result<Matrix> {
    let r = u.cols();
    if lambda.len() < r {
        return Err(Error::shape(format!(
            "{} importance values for {r} basis vectors",
            lambda.len()
        )));
    }
    if lambda.iter().any(|&l| !(0.0..=1.0).contains(&l)) {
        return Err(Error::validation("importance values must lie in [0, 1]"));
    }
    if lambda[r..].iter().any(|&l| l != 0.0) {
        return Err(Error::shape(
            "nonzero importance for a direction outside the basis",
        ));
    }
    let defect = orthonormality_defect(u);
    if defect > ORTHONORMAL_TOLERANCE {
        return Err(Error::numeric(format!(
            "basis is not orthonormal (Gram deviation {defect:e})"
        )));
    }
    let mut scaled = u.clone();
    for row in 0..scaled.rows() {
        for (x, l) in scaled.row_mut(row).iter_mut().zip(lambda) {
            *x *= l;
        }
    }
    let mut p = gemm(&scaled, Op::N, u, Op::T)?;
    let n = p.rows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (p.get(i, j) + p.get(j, i));
            p.set(i, j, avg);
            p.set(j, i, avg);
        }
    }
    Ok(p)
}

/// `Ŵ = W · W_pᵀ`, so that `a · Ŵᵀ = (a · W_p) · Wᵀ`.
pub fn update_parameter(weight: &Matrix, alignment: &Matrix) -> Result<Matrix> {
    if weight.cols() != alignment.rows() || alignment.rows() != alignment.cols() {
        return Err(Error::shape(format!(
            "weight {}x{} cannot absorb a {}x{} alignment matrix",
            weight.rows(),
            weight.cols(),
            alignment.rows(),
            alignment.cols()
        )));
    }
    let out = gemm(weight, Op::N, alignment, Op::T)?;
    if !out.is_finite() {
        return Err(Error::numeric("updated weight is not finite"));
    }
    Ok(out)
}
