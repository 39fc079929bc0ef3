//! Thin singular value decomposition by one-sided (Hestenes) Jacobi.
//!
//! The input is first oriented so that it is tall (`m >= r`), reduced to an
//! `r x r` triangular factor with Householder QR, and the Jacobi sweeps run
//! on that factor. Columns are stored contiguously throughout.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Singular values below this fraction of the largest one are set to zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

const MAX_SWEEPS: usize = 80;

/// `A = U · diag(sigma) · Vᵀ` with `r = min(rows, cols)` retained triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `rows × r`, orthonormal columns.
    pub u: Matrix,
    /// Descending, non-negative, length `r`.
    pub sigma: Vec<f64>,
    /// `cols × r`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.iter().filter(|&&s| s > 0.0).count()
    }

    /// `U · diag(sigma) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (x, s) in us.row_mut(r).iter_mut().zip(&self.sigma) {
                *x *= s;
            }
        }
        crate::linalg::gemm(&us, crate::linalg::Op::N, &self.v, crate::linalg::Op::T)
            .expect("conformable by construction")
    }
}

/// Column-major scratch matrix.
struct Cols {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl Cols {
    fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.m..(j + 1) * self.m]
    }

    fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.m..(j + 1) * self.m]
    }

    fn two_cols_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let m = self.m;
        let (lo, hi) = self.data.split_at_mut(q * m);
        (&mut lo[p * m..(p + 1) * m], &mut hi[..m])
    }

    fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Cols { m: n, n, data }
    }
}

/// Householder QR of a tall column-major matrix. `R` is returned as an
/// `n × n` column-major factor; the reflectors stay in `Reflectors`.
struct Reflectors {
    m: usize,
    vs: Vec<Vec<f64>>,
    taus: Vec<f64>,
}

impl Reflectors {
    /// `x <- Q x` for `x` of length `m`.
    fn apply_q(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.m);
        for j in (0..self.vs.len()).rev() {
            let tau = self.taus[j];
            if tau == 0.0 {
                continue;
            }
            let v = &self.vs[j];
            let tail = &mut x[j..];
            let dot: f64 = v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
            let f = tau * dot;
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= f * vi;
            }
        }
    }
}

fn householder_qr(mut a: Cols) -> (Cols, Reflectors) {
    let (m, n) = (a.m, a.n);
    let mut vs = Vec::with_capacity(n);
    let mut taus = Vec::with_capacity(n);
    for j in 0..n {
        let x = &a.col(j)[j..];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            vs.push(vec![0.0; m - j]);
            taus.push(0.0);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|t| t * t).sum();
        let tau = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
        {
            let col = a.col_mut(j);
            col[j] = alpha;
            for t in &mut col[j + 1..] {
                *t = 0.0;
            }
        }
        if tau != 0.0 {
            for k in j + 1..n {
                let tail = &mut a.col_mut(k)[j..];
                let dot: f64 = v.iter().zip(tail.iter()).map(|(p, q)| p * q).sum();
                let f = tau * dot;
                for (t, vi) in tail.iter_mut().zip(&v) {
                    *t -= f * vi;
                }
            }
        }
        vs.push(v);
        taus.push(tau);
    }
    let mut r = Cols {
        m: n,
        n,
        data: vec![0.0; n * n],
    };
    for j in 0..n {
        r.col_mut(j)[..=j].copy_from_slice(&a.col(j)[..=j]);
    }
    (r, Reflectors { m, vs, taus })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

fn rotate(p: &mut [f64], q: &mut [f64], c: f64, s: f64) {
    for (x, y) in p.iter_mut().zip(q.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Orthogonalises the columns of `w` in place, accumulating rotations into `v`.
fn jacobi_sweeps(w: &mut Cols, v: &mut Cols) -> Result<()> {
    let n = w.n;
    let tol = f64::EPSILON * (w.m as f64).sqrt().max(1.0);
    let mut norms = vec![0.0; n];
    for sweep in 0..MAX_SWEEPS {
        for (j, nj) in norms.iter_mut().enumerate() {
            *nj = norm_sq(w.col(j));
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta) = (norms[p], norms[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(w.col(p), w.col(q));
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                let (wp, wq) = w.two_cols_mut(p, q);
                rotate(wp, wq, c, s);
                let (vp, vq) = v.two_cols_mut(p, q);
                rotate(vp, vq, c, s);
                norms[p] = (alpha - t * gamma).max(0.0);
                norms[q] = beta + t * gamma;
            }
        }
        if !rotated {
            return Ok(());
        }
        if sweep + 1 == MAX_SWEEPS {
            break;
        }
    }
    Err(Error::numeric(format!(
        "Jacobi SVD did not converge within {MAX_SWEEPS} sweeps"
    )))
}

/// Orthonormal vectors spanning the complement of the (orthonormal) columns
/// `basis` inside `R^dim`, `count` of them.
fn orthonormal_complement(basis: &[Vec<f64>], dim: usize, count: usize) -> Vec<Vec<f64>> {
    if count == 0 {
        return Vec::new();
    }
    let k = basis.len();
    if k == 0 {
        return (0..count)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e
            })
            .collect();
    }
    let mut data = Vec::with_capacity(dim * k);
    for b in basis {
        data.extend_from_slice(b);
    }
    let (_, refl) = householder_qr(Cols { m: dim, n: k, data });
    (k..k + count)
        .map(|i| {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            refl.apply_q(&mut e);
            e
        })
        .collect()
}

/// Full thin SVD. Deterministic; the first non-negligible entry of each
/// `u` column is made non-negative.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if a.is_empty() {
        return Err(Error::shape(format!(
            "cannot decompose an empty {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::numeric("svd input contains non-finite entries"));
    }

    let transposed = a.rows() < a.cols();
    let (m, r) = if transposed {
        (a.cols(), a.rows())
    } else {
        (a.rows(), a.cols())
    };

    // Column-major copy of the tall orientation: column j of `tall` is
    // row j of `a` when transposed, column j of `a` otherwise.
    let mut data = Vec::with_capacity(m * r);
    if transposed {
        data.extend_from_slice(a.data());
    } else {
        for j in 0..r {
            data.extend((0..m).map(|i| a.get(i, j)));
        }
    }
    let (mut w, refl) = householder_qr(Cols { m, n: r, data });
    let mut v = Cols::identity(r);
    jacobi_sweeps(&mut w, &mut v)?;

    let raw: Vec<f64> = (0..r).map(|j| norm_sq(w.col(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| raw[j].total_cmp(&raw[i]).then(i.cmp(&j)));

    let sigma_max = raw[order[0]];
    let cutoff = RANK_TOLERANCE * sigma_max;
    let mut sigma = Vec::with_capacity(r);
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut right: Vec<Vec<f64>> = Vec::with_capacity(r);
    for &j in &order {
        let s = raw[j];
        right.push(v.col(j).to_vec());
        if s > cutoff && s > 0.0 {
            sigma.push(s);
            left.push(w.col(j).iter().map(|x| x / s).collect());
        } else {
            sigma.push(0.0);
        }
    }
    let rank = left.len();
    let filler = orthonormal_complement(&left, r, r - rank);
    left.extend(filler);

    // Lift the r-dimensional left vectors back through Q.
    let lifted: Vec<Vec<f64>> = left
        .into_iter()
        .map(|col| {
            let mut x = vec![0.0; m];
            x[..r].copy_from_slice(&col);
            refl.apply_q(&mut x);
            x
        })
        .collect();

    let (mut u_cols, mut v_cols) = if transposed {
        (right, lifted)
    } else {
        (lifted, right)
    };

    for (uc, vc) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        let lead = uc.iter().copied().find(|x| x.abs() > f64::EPSILON);
        if lead.is_some_and(|x| x < 0.0) {
            uc.iter_mut().for_each(|x| *x = -*x);
            vc.iter_mut().for_each(|x| *x = -*x);
        }
    }

    Ok(SvdResult {
        u: from_columns(&u_cols, a.rows()),
        sigma,
        v: from_columns(&v_cols, a.cols()),
    })
}

fn from_columns(cols: &[Vec<f64>], rows: usize) -> Matrix {
    Matrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Largest deviation of `QᵀQ` from the identity.
pub fn orthonormality_defect(q: &Matrix) -> f64 {
    let g = crate::linalg::gemm(q, crate::linalg::Op::T, q, crate::linalg::Op::N)
        .expect("conformable by construction");
    let mut worst: f64 = 0.0;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g.get(i, j) - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input() {
        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = svd(&a).unwrap();
        assert_eq!(s.sigma, vec![2.0, 1.0]);
        assert!(s.u.max_abs_diff(&Matrix::identity(2)).unwrap() < 1e-15);
        assert!(s.v.max_abs_diff(&Matrix::identity(2)).unwrap() < 1e-15);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [0.6, 0.8];
        let v = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt()];
        let a = Matrix::from_fn(2, 2, |i, j| u[i] * v[j]);
        let s = svd(&a).unwrap();
        assert!((s.sigma[0] - 1.0).abs() < 1e-14);
        assert_eq!(s.sigma[1], 0.0);
        assert!(orthonormality_defect(&s.u) < 1e-12);
        assert!(orthonormality_defect(&s.v) < 1e-12);
        assert!(s.reconstruct().max_abs_diff(&a).unwrap() < 1e-14);
    }

    #[test]
    fn wide_and_tall_agree_on_spectrum() {
        let a = Matrix::from_fn(3, 7, |i, j| ((i * 7 + j) as f64 * 0.37).sin());
        let wide = svd(&a).unwrap();
        let tall = svd(&a.transpose()).unwrap();
        for (x, y) in wide.sigma.iter().zip(&tall.sigma) {
            assert!((x - y).abs() < 1e-13);
        }
        assert_eq!(wide.u.shape(), (3, 3));
        assert_eq!(wide.v.shape(), (7, 3));
    }

    #[test]
    fn zero_matrix_is_all_zero_spectrum_with_orthonormal_bases() {
        let s = svd(&Matrix::zeros(4, 3)).unwrap();
        assert_eq!(s.sigma, vec![0.0; 3]);
        assert!(orthonormality_defect(&s.u) < 1e-14);
        assert!(orthonormality_defect(&s.v) < 1e-14);
    }

    #[test]
    fn empty_and_nonfinite_rejected() {
        assert!(matches!(svd(&Matrix::zeros(0, 3)), Err(Error::Shape(_))));
        let mut m = Matrix::zeros(2, 2);
        m.data_mut()[1] = f64::INFINITY;
        assert!(matches!(svd(&m), Err(Error::Numeric(_))));
    }

    #[test]
    fn sign_convention_holds() {
        let a = Matrix::from_fn(5, 4, |i, j| ((i + 2 * j) as f64).cos() - 0.3);
        let s = svd(&a).unwrap();
        for j in 0..s.u.cols() {
            let col = s.u.column(j);
            let lead = col.iter().find(|x| x.abs() > f64::EPSILON).unwrap();
            assert!(*lead >= 0.0);
        }
    }
}
