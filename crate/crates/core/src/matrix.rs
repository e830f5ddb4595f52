//! Small dense matrices (d ≤ 8) and symmetric positive definite algebra.
//!
//! Every spectral operation goes through a cyclic Jacobi eigendecomposition,
//! which is accurate to a few ulps at these sizes.

use std::fmt;

use crate::error::{Error, Result};

/// Largest supported vector dimension.
pub const MAX_DIM: usize = 8;

/// Default condition-number cap for inverse square roots.
pub const DEFAULT_COND_CAP: f64 = 1e10;

/// Relative eigenvalue floor, multiplied by `d·λ_max`.
const EIG_FLOOR: f64 = 1e-12;

/// Symmetry tolerance, relative to `max(1, max |a_ij|)`.
const SYM_TOL: f64 = 1e-12;

/// Square `d × d` real matrix stored row-major in a fixed buffer.
#[derive(Clone, Copy, PartialEq)]
pub struct Matrix {
    d: usize,
    a: [f64; MAX_DIM * MAX_DIM],
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.d).map(|i| &self.a[i * self.d..(i + 1) * self.d]).collect();
        f.debug_struct("Matrix").field("d", &self.d).field("rows", &rows).finish()
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "matrix dimension {d} outside 1..={MAX_DIM}"
        )));
    }
    Ok(())
}

impl Matrix {
    /// Zero matrix. Panics if `d` is outside `1..=MAX_DIM`.
    pub fn zeros(d: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d), "matrix dimension {d} unsupported");
        Matrix {
            d,
            a: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &x) in diag.iter().enumerate() {
            m.set(i, i, x);
        }
        m
    }

    pub fn from_row_major(d: usize, entries: &[f64]) -> Result<Self> {
        check_dim(d)?;
        if entries.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: entries.len(),
            });
        }
        if let Some(x) = entries.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite matrix entry {x}")));
        }
        let mut m = Self::zeros(d);
        m.a[..d * d].copy_from_slice(entries);
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.d + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.a[i * self.d + j] = x;
    }

    pub fn row_major(&self) -> &[f64] {
        &self.a[..self.d * self.d]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.d, rhs.d);
        let d = self.d;
        let mut out = Matrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let aik = self.get(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..d {
                    out.a[i * d + j] += aik * rhs.get(k, j);
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &Matrix) -> Matrix {
        let mut out = *self;
        for (o, r) in out.a.iter_mut().zip(rhs.a.iter()) {
            *o += r;
        }
        out
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        let mut out = *self;
        for (o, r) in out.a.iter_mut().zip(rhs.a.iter()) {
            *o -= r;
        }
        out
    }

    pub fn scale(&self, c: f64) -> Matrix {
        let mut out = *self;
        out.a.iter_mut().for_each(|x| *x *= c);
        out
    }

    /// `out = self · x`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = self.a[i * d..(i + 1) * d]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.apply_into(x, &mut out);
        out
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for i in 0..d {
            let row: f64 = self.a[i * d..(i + 1) * d]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
            s += x[i] * row;
        }
        s
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.row_major().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Largest absolute difference `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                m = m.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        m
    }

    /// `(A + Aᵀ) / 2`, with the diagonal left untouched.
    fn symmetrized(&self) -> Matrix {
        let mut s = *self;
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        s
    }
}

/// Spectral norm of a general matrix: the largest singular value.
pub fn op_norm(a: &Matrix) -> f64 {
    let gram = SymMatrix::from_symmetric_unchecked(a.transpose().mul(a));
    let eig = gram.eig();
    eig.max().max(0.0).sqrt()
}

/// Trace of a matrix.
pub fn trace(a: &Matrix) -> f64 {
    a.trace()
}

/// Symmetric matrix. Symmetry is checked on construction and then enforced
/// exactly by averaging the off-diagonal pairs.
#[derive(Clone, Copy, PartialEq)]
pub struct SymMatrix(Matrix);

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("SymMatrix").field(&self.0).finish()
    }
}

/// Eigendecomposition of a symmetric matrix. Eigenvalues ascending; column
/// `k` of `vectors` is the unit eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn max(&self) -> f64 {
        *self.values.last().expect("nonempty spectrum")
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// Eigenvector `k` as an owned vector.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.vectors.dim()).map(|i| self.vectors.get(i, k)).collect()
    }

    /// `Q diag(g(λ)) Qᵀ`.
    fn compose(&self, g: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.vectors.dim();
        let gl: Vec<f64> = self.values.iter().map(|&l| g(l)).collect();
        let mut out = Matrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                let v: f64 = (0..d)
                    .map(|k| self.vectors.get(i, k) * gl[k] * self.vectors.get(j, k))
                    .sum();
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        SymMatrix(out)
    }
}

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        let asym = m.asymmetry();
        if asym > SYM_TOL * m.max_abs().max(1.0) {
            return Err(Error::NonSymmetric { asymmetry: asym });
        }
        Ok(SymMatrix(m.symmetrized()))
    }

    /// Wraps a matrix known to be symmetric up to rounding (e.g. `Aᵀ B A`).
    pub(crate) fn from_symmetric_unchecked(m: Matrix) -> Self {
        SymMatrix(m.symmetrized())
    }

    pub fn from_row_major(d: usize, entries: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_row_major(d, entries)?)
    }

    pub fn identity(d: usize) -> Self {
        SymMatrix(Matrix::identity(d))
    }

    pub fn zeros(d: usize) -> Self {
        SymMatrix(Matrix::zeros(d))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        SymMatrix(Matrix::from_diag(diag))
    }

    #[inline]
    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.0.quad_form(x)
    }

    pub fn add(&self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.add(&rhs.0))
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(self.0.scale(c))
    }

    /// In-place `self += c · rhs`.
    pub fn add_scaled(&mut self, rhs: &SymMatrix, c: f64) {
        let n = self.0.d * self.0.d;
        for (a, b) in self.0.a[..n].iter_mut().zip(&rhs.0.a[..n]) {
            *a += c * b;
        }
    }

    /// Congruence `Aᵀ S A`.
    pub fn congruence(&self, a: &Matrix) -> SymMatrix {
        SymMatrix::from_symmetric_unchecked(a.transpose().mul(&self.0).mul(a))
    }

    /// Symmetric eigendecomposition by cyclic Jacobi rotations.
    pub fn eig(&self) -> SymEigen {
        jacobi_eigen(&self.0)
    }

    /// Eigenvalue floor `d · 1e-12 · max|λ|` used by `sqrt` and `inv_sqrt`.
    fn floor(d: usize, eig: &SymEigen) -> f64 {
        let scale = eig.values.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        d as f64 * EIG_FLOOR * scale
    }

    /// Principal square root of a PSD matrix.
    pub fn sqrt(&self) -> Result<SymMatrix> {
        let eig = self.eig();
        let tol = Self::floor(self.dim(), &eig);
        if eig.min() < -tol {
            return Err(Error::IndefiniteBeyondTolerance {
                min_eigenvalue: eig.min(),
            });
        }
        Ok(eig.compose(|l| l.max(0.0).sqrt()))
    }

    /// Inverse square root of a PD matrix whose condition number is at most
    /// `cond_cap`.
    pub fn inv_sqrt(&self, cond_cap: f64) -> Result<SymMatrix> {
        let eig = self.eig();
        Self::check_conditioning(self.dim(), &eig, cond_cap)?;
        Ok(eig.compose(|l| 1.0 / l.sqrt()))
    }

    /// Inverse of a PD matrix whose condition number is at most `cond_cap`.
    pub fn inverse(&self, cond_cap: f64) -> Result<SymMatrix> {
        let eig = self.eig();
        Self::check_conditioning(self.dim(), &eig, cond_cap)?;
        Ok(eig.compose(|l| 1.0 / l))
    }

    /// Both `A^{1/2}` and `A^{-1/2}` from one decomposition.
    pub fn sqrt_pair(&self, cond_cap: f64) -> Result<(SymMatrix, SymMatrix)> {
        let eig = self.eig();
        Self::check_conditioning(self.dim(), &eig, cond_cap)?;
        Ok((eig.compose(f64::sqrt), eig.compose(|l| 1.0 / l.sqrt())))
    }

    fn check_conditioning(d: usize, eig: &SymEigen, cond_cap: f64) -> Result<()> {
        let tol = Self::floor(d, eig);
        let (lo, hi) = (eig.min(), eig.max());
        if lo <= tol || lo <= 0.0 {
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            return Err(Error::SingularOrIllConditioned { condition });
        }
        let condition = hi / lo;
        if condition > cond_cap {
            return Err(Error::SingularOrIllConditioned { condition });
        }
        Ok(())
    }
}

/// `A^{1/2}` for symmetric PSD `A`.
pub fn spd_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    a.sqrt()
}

/// `A^{-1/2}` for symmetric PD `A` with condition number ≤ `cond_cap`.
pub fn spd_inv_sqrt(a: &SymMatrix, cond_cap: f64) -> Result<SymMatrix> {
    a.inv_sqrt(cond_cap)
}

fn jacobi_eigen(m: &Matrix) -> SymEigen {
    let d = m.d;
    let mut a = *m;
    let mut v = Matrix::identity(d);

    for _sweep in 0..64 {
        let off: f64 = (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j) * a.get(i, j))
            .sum();
        let diag: f64 = (0..d).map(|i| a.get(i, i) * a.get(i, i)).sum();
        if off <= f64::EPSILON * f64::EPSILON * 1e-4 * diag || off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..d {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..d {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(d);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..d {
            vectors.set(r, col, v.get(r, src));
        }
    }
    SymEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.sub(b).max_abs() <= tol
    }

    #[test]
    fn identity_roots() {
        for d in 1..=MAX_DIM {
            let id = SymMatrix::identity(d);
            assert!(close(spd_sqrt(&id).unwrap().as_matrix(), id.as_matrix(), 1e-15));
            assert!(close(
                spd_inv_sqrt(&id, DEFAULT_COND_CAP).unwrap().as_matrix(),
                id.as_matrix(),
                1e-15
            ));
            assert_eq!(op_norm(id.as_matrix()), 1.0);
            assert_eq!(trace(id.as_matrix()), d as f64);
        }
    }

    #[test]
    fn diagonal_cases() {
        let a = SymMatrix::from_diag(&[4.0, 9.0]);
        let r = spd_sqrt(&a).unwrap();
        assert!(close(r.as_matrix(), &Matrix::from_diag(&[2.0, 3.0]), 1e-15));
        let ri = spd_inv_sqrt(&a, DEFAULT_COND_CAP).unwrap();
        assert!(close(ri.as_matrix(), &Matrix::from_diag(&[0.5, 1.0 / 3.0]), 1e-15));
        assert_eq!(op_norm(&Matrix::from_diag(&[2.0, -3.0])), 3.0);
        assert_eq!(trace(&Matrix::from_diag(&[1.0, 2.0, 3.0])), 6.0);
    }

    #[test]
    fn rejects_bad_input() {
        let m = Matrix::from_row_major(2, &[1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(matches!(SymMatrix::new(m), Err(Error::NonSymmetric { .. })));
        let indef = SymMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(indef.sqrt(), Err(Error::IndefiniteBeyondTolerance { .. })));
        let singular = SymMatrix::from_diag(&[1.0, 0.0]);
        assert!(matches!(
            singular.inv_sqrt(DEFAULT_COND_CAP),
            Err(Error::SingularOrIllConditioned { .. })
        ));
        let ill = SymMatrix::from_diag(&[1.0, 1e-11]);
        match ill.inv_sqrt(DEFAULT_COND_CAP) {
            Err(Error::SingularOrIllConditioned { condition }) => assert!(condition > 1e10),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Matrix::from_row_major(9, &[0.0; 81]).is_err());
        assert!(Matrix::from_row_major(2, &[0.0; 3]).is_err());
    }

    #[test]
    fn psd_rank_deficient_sqrt_is_clamped() {
        // eigenvalues 2 and 0; rounding may push the zero slightly negative.
        let a = SymMatrix::from_row_major(2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let r = a.sqrt().unwrap();
        let back = r.as_matrix().mul(r.as_matrix());
        assert!(close(&back, a.as_matrix(), 1e-14));
    }

    #[test]
    fn jacobi_orders_eigenvalues() {
        let a = SymMatrix::from_row_major(3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]).unwrap();
        let e = a.eig();
        let s2 = 2f64.sqrt();
        let expected = [2.0 - s2, 2.0, 2.0 + s2];
        for (v, x) in e.values.iter().zip(expected) {
            assert!((v - x).abs() < 1e-14);
        }
        for k in 0..3 {
            let v = e.vector(k);
            let av = a.as_matrix().apply(&v);
            for i in 0..3 {
                assert!((av[i] - e.values[k] * v[i]).abs() < 1e-14);
            }
        }
    }
}
