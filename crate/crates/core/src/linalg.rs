//! Small dense real linear algebra.
//!
//! Everything here targets desk-scale problems (a few hundred rows at most),
//! so all matrices are dense and row-major and the factorizations are the
//! simple, robust Jacobi-type ones: cyclic Jacobi for symmetric
//! eigenproblems and one-sided (Hestenes) Jacobi for the SVD behind the
//! pseudoinverse.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Relative cutoff below which singular values are treated as zero.
pub const DEFAULT_PINV_TOL: f64 = 1e-10;
/// Absolute tolerance on the least-squares residual of `Ax = b`.
pub const DEFAULT_CONSISTENCY_TOL: f64 = 1e-8;
/// Relative symmetry tolerance for [`SpdMatrix`] and [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 100;

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            let row = row.as_ref();
            if row.len() != c {
                return Err(Error::Shape {
                    op: "from_rows",
                    expected: (r, c),
                    found: (r, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    /// A single-column matrix holding `v`.
    pub fn column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::Shape {
                op: "matmul",
                expected: (self.cols, rhs.cols),
                found: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Shape {
                op: "matvec",
                expected: (self.cols, 1),
                found: (x.len(), 1),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ x` without forming the transpose.
    pub fn t_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::Shape {
                op: "t_matvec",
                expected: (self.rows, 1),
                found: (x.len(), 1),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    /// `selfᵀ rhs` without forming the transpose.
    pub fn t_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows() != rhs.rows() {
            return Err(Error::Shape {
                op: "t_matmul",
                expected: (self.rows(), rhs.cols()),
                found: rhs.shape(),
            });
        }
        let mut out = Self::zeros(self.cols(), rhs.cols());
        for k in 0..self.rows() {
            let a = self.row(k);
            let b = rhs.row(k);
            for (i, &aki) in a.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                for (j, &bkj) in b.iter().enumerate() {
                    out[(i, j)] += aki * bkj;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Self, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape {
                op,
                expected: self.shape(),
                found: rhs.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Adds `s * rhs` into `self`.
    pub fn axpy(&mut self, s: f64, rhs: &Self) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape {
                op: "axpy",
                expected: self.shape(),
                found: rhs.shape(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|m_ij - m_ji|`; `None` for non-square input.
    pub fn max_asymmetry(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        Some(worst)
    }

    /// Replaces the matrix by `(M + Mᵀ)/2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    fn check_symmetric(&self) -> Result<()> {
        let asym = self.max_asymmetry().ok_or(Error::Shape {
            op: "symmetric",
            expected: (self.rows, self.rows),
            found: self.shape(),
        })?;
        if asym > SYMMETRY_TOL * self.max_abs().max(1e-300) {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym,
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
#[derive(Debug, Clone)]
pub struct SymEig {
    /// Eigenvalues in non-increasing order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, matching `values`.
    pub vectors: DenseMatrix,
}

impl SymEig {
    /// `U f(Λ) Uᵀ`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.values.len();
        let mut out = DenseMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let uik = self.vectors[(i, k)] * w;
                if uik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += uik * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

/// Symmetric eigendecomposition, eigenvalues sorted non-increasing.
pub fn sym_eig(m: &DenseMatrix) -> Result<SymEig> {
    m.check_symmetric()?;
    let n = m.rows();
    let mut a = m.clone();
    a.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return Ok(SymEig {
            values: vec![0.0; n],
            vectors: v,
        });
    }

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if sqrt(off) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEig { values, vectors })
}

/// Thin SVD `M = U diag(σ) Vᵀ` from one-sided Jacobi.
///
/// `u` holds the unnormalized columns `M v_j = σ_j u_j`, which is all the
/// pseudoinverse needs.
struct OneSidedSvd {
    /// `M V`, columns mutually orthogonal.
    mv: DenseMatrix,
    v: DenseMatrix,
    sigma: Vec<f64>,
}

fn one_sided_jacobi(m: &DenseMatrix) -> OneSidedSvd {
    let (rows, n) = m.shape();
    let mut u = m.clone();
    let mut v = DenseMatrix::identity(n);
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + sqrt(1.0 + zeta * zeta));
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..rows {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = (0..n)
        .map(|j| sqrt((0..rows).map(|i| u[(i, j)] * u[(i, j)]).sum()))
        .collect();
    OneSidedSvd { mv: u, v, sigma }
}

/// Singular values of `m`, non-increasing.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    let work = if m.rows() < m.cols() {
        m.transpose()
    } else {
        m.clone()
    };
    let mut s = one_sided_jacobi(&work).sigma;
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Moore-Penrose pseudoinverse; singular values below `tol * σ_max` count as
/// zero.
pub fn pseudoinverse(m: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::domain("tol", tol, "must lie in (0, 1)"));
    }
    let wide = m.rows() < m.cols();
    let work = if wide { m.transpose() } else { m.clone() };
    let svd = one_sided_jacobi(&work);
    let (rows, n) = work.shape();
    let smax = svd.sigma.iter().cloned().fold(0.0, f64::max);
    // work† = Σ_j v_j (M v_j)ᵀ / σ_j², an n x rows matrix
    let mut pinv = DenseMatrix::zeros(n, rows);
    if smax > 0.0 {
        for (j, &s) in svd.sigma.iter().enumerate() {
            if s <= tol * smax {
                continue;
            }
            let w = 1.0 / (s * s);
            for a in 0..n {
                let va = svd.v[(a, j)] * w;
                if va == 0.0 {
                    continue;
                }
                for b in 0..rows {
                    pinv[(a, b)] += va * svd.mv[(b, j)];
                }
            }
        }
    }
    Ok(if wide { pinv.transpose() } else { pinv })
}

/// A symmetric positive definite matrix with its eigendecomposition and the
/// derived inverse, square root and inverse square root cached at
/// construction.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    base: DenseMatrix,
    eig: SymEig,
    inv: DenseMatrix,
    sqrt: DenseMatrix,
    inv_sqrt: DenseMatrix,
}

impl SpdMatrix {
    pub fn new(m: DenseMatrix) -> Result<Self> {
        let eig = sym_eig(&m)?;
        let min = eig.values.last().copied().unwrap_or(1.0);
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min,
            });
        }
        let inv = eig.map_values(|l| 1.0 / l);
        let sqrt_m = eig.map_values(sqrt);
        let inv_sqrt = eig.map_values(|l| 1.0 / sqrt(l));
        let mut base = m;
        base.symmetrize();
        Ok(Self {
            base,
            eig,
            inv,
            sqrt: sqrt_m,
            inv_sqrt,
        })
    }

    pub fn identity(n: usize) -> Self {
        let i = DenseMatrix::identity(n);
        Self {
            base: i.clone(),
            eig: SymEig {
                values: vec![1.0; n],
                vectors: i.clone(),
            },
            inv: i.clone(),
            sqrt: i.clone(),
            inv_sqrt: i,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.base
    }

    pub fn eig(&self) -> &SymEig {
        &self.eig
    }

    pub fn inverse(&self) -> &DenseMatrix {
        &self.inv
    }

    pub fn sqrt(&self) -> &DenseMatrix {
        &self.sqrt
    }

    pub fn inv_sqrt(&self) -> &DenseMatrix {
        &self.inv_sqrt
    }
}

/// `B^{-1/2}`.
pub fn spd_inv_sqrt(b: &SpdMatrix) -> DenseMatrix {
    b.inv_sqrt().clone()
}

/// `xᵀ B x`.
pub fn b_norm_sq(x: &[f64], b: &SpdMatrix) -> Result<f64> {
    let bx = b.matrix().matvec(x)?;
    Ok(dot(x, &bx).max(0.0))
}

/// B-orthogonal projection of `x0` onto `{x : Ax = b}`.
///
/// See [`crate::sketch::LinearSystem::project`]; this is the free-function
/// form with an explicit consistency tolerance.
pub fn project_onto_solutions(
    x0: &[f64],
    system: &crate::sketch::LinearSystem,
    tol: f64,
) -> Result<Vec<f64>> {
    system.check_consistent(tol)?;
    system.project(x0)
}
