//! Dense linear-algebra kernels for square-root filtering.
//!
//! Everything here operates on small dense matrices (dimensions in the tens),
//! stored row-major. Factors follow the lower-triangular convention
//! `M = L · Lᵀ`. The four core kernels are [`cholesky_factor`],
//! [`chol_rank_one`], [`qr_r_factor`] and [`solve_with_factor`]; LU with
//! partial pivoting and a symmetric Jacobi eigensolver are provided as
//! supporting routines for the ARD machinery.

use std::fmt;
use std::ops::{Index, IndexMut};

/// Tolerances shared by the kernels in this module.
///
/// `symmetry_tol` bounds the allowed asymmetry (relative to the largest
/// entry) of a matrix passed to [`cholesky_factor`]. `pivot_floor` is the
/// smallest pivot accepted before a factorization or downdate is declared
/// to have lost positive definiteness.
#[derive(Debug, Clone, Copy)]
pub struct KernelCfg {
    pub symmetry_tol: f64,
    pub pivot_floor: f64,
}

impl Default for KernelCfg {
    fn default() -> Self {
        Self {
            symmetry_tol: 1e-10,
            pivot_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelError {
    /// A Cholesky pivot fell at or below the pivot floor. Signals a broken
    /// covariance upstream; callers are expected to repair or abort.
    NotPositiveDefinite { pivot_index: usize, pivot: f64 },
    /// Input claimed symmetric but is not, within the configured tolerance.
    NotSymmetric { max_asymmetry: f64 },
    /// A rank-one downdate would produce a non-positive pivot.
    DowndateBreaksSpd { pivot_index: usize },
    /// A QR diagonal fell below `1e-12 · ‖A‖`.
    RankDeficient { column: usize },
    /// Pivoting in the LU factorization found no usable pivot.
    Singular { pivot_index: usize },
    /// Incompatible dimensions for the requested operation.
    ShapeMismatch { context: &'static str },
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelError::NotPositiveDefinite { pivot_index, pivot } => {
                write!(f, "matrix not positive definite: pivot {pivot_index} = {pivot:e}")
            }
            KernelError::NotSymmetric { max_asymmetry } => {
                write!(f, "matrix not symmetric: max |a_ij - a_ji| = {max_asymmetry:e}")
            }
            KernelError::DowndateBreaksSpd { pivot_index } => {
                write!(f, "rank-one downdate breaks positive definiteness at pivot {pivot_index}")
            }
            KernelError::RankDeficient { column } => {
                write!(f, "rank-deficient input: QR diagonal {column} below floor")
            }
            KernelError::Singular { pivot_index } => {
                write!(f, "singular matrix: no pivot at column {pivot_index}")
            }
            KernelError::ShapeMismatch { context } => write!(f, "shape mismatch in {context}"),
        }
    }
}

impl std::error::Error for KernelError {}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
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

    /// Builds a matrix from row slices. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for j in 0..self.cols {
                acc += self[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn add(&self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] + rhs[(i, j)])
    }

    pub fn sub(&self, rhs: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)] - rhs[(i, j)])
    }

    pub fn scaled(&self, s: f64) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| s * self[(i, j)])
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Mat {
        assert!(r0 + rows <= self.rows && c0 + cols <= self.cols);
        Mat::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Mat) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols);
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn symmetrized(&self) -> Mat {
        assert!(self.is_square());
        Mat::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Square lower-triangular matrix; the strict upper triangle is exactly zero.
///
/// Valid covariance factors additionally have a strictly positive diagonal;
/// factors produced by [`cholesky_factor`] and [`chol_rank_one`] guarantee
/// this. Zero-padded noise factors are kept as plain [`Mat`] instead.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    m: Mat,
}

impl LowerTriangular {
    pub fn from_mat(m: Mat) -> Result<Self, KernelError> {
        if !m.is_square() {
            return Err(KernelError::ShapeMismatch { context: "LowerTriangular::from_mat" });
        }
        for i in 0..m.rows() {
            for j in i + 1..m.cols() {
                if m[(i, j)] != 0.0 {
                    return Err(KernelError::ShapeMismatch {
                        context: "LowerTriangular::from_mat: nonzero strict upper triangle",
                    });
                }
            }
        }
        Ok(Self { m })
    }

    /// Wraps a matrix the caller guarantees to be lower triangular.
    pub fn from_mat_unchecked(m: Mat) -> Self {
        debug_assert!(m.is_square());
        Self { m }
    }

    pub fn n(&self) -> usize {
        self.m.rows()
    }

    pub fn mat(&self) -> &Mat {
        &self.m
    }

    pub fn into_mat(self) -> Mat {
        self.m
    }

    /// Dense `L · Lᵀ`.
    pub fn reconstruct(&self) -> Mat {
        self.m.matmul(&self.m.transpose())
    }

    pub fn diag(&self) -> Vec<f64> {
        self.m.diag()
    }

    /// Forward substitution: solves `L · X = B`.
    pub fn solve_lower(&self, b: &Mat) -> Mat {
        let n = self.n();
        assert_eq!(b.rows(), n, "solve_lower shape mismatch");
        let mut x = b.clone();
        for col in 0..b.cols() {
            for i in 0..n {
                let mut acc = x[(i, col)];
                for k in 0..i {
                    acc -= self.m[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = acc / self.m[(i, i)];
            }
        }
        x
    }

    /// Back substitution: solves `Lᵀ · X = B`.
    pub fn solve_transpose(&self, b: &Mat) -> Mat {
        let n = self.n();
        assert_eq!(b.rows(), n, "solve_transpose shape mismatch");
        let mut x = b.clone();
        for col in 0..b.cols() {
            for ii in 0..n {
                let i = n - 1 - ii;
                let mut acc = x[(i, col)];
                for k in i + 1..n {
                    acc -= self.m[(k, i)] * x[(k, col)];
                }
                x[(i, col)] = acc / self.m[(i, i)];
            }
        }
        x
    }

    pub fn solve_lower_vec(&self, b: &[f64]) -> Vec<f64> {
        let col = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        self.solve_lower(&col).col(0)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_factor(a: &Mat) -> Result<LowerTriangular, KernelError> {
    cholesky_factor_with(a, &KernelCfg::default())
}

pub fn cholesky_factor_with(a: &Mat, cfg: &KernelCfg) -> Result<LowerTriangular, KernelError> {
    if !a.is_square() {
        return Err(KernelError::ShapeMismatch { context: "cholesky_factor" });
    }
    let n = a.rows();
    let scale = a.max_abs().max(1.0);
    let mut max_asym = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            max_asym = max_asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if max_asym > cfg.symmetry_tol * scale {
        return Err(KernelError::NotSymmetric { max_asymmetry: max_asym });
    }

    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= cfg.pivot_floor {
            return Err(KernelError::NotPositiveDefinite { pivot_index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut acc = 0.5 * (a[(i, j)] + a[(j, i)]);
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / ljj;
        }
    }
    Ok(LowerTriangular { m: l })
}

/// Cholesky-like factor of a positive *semi*-definite matrix; zero pivots
/// produce zero columns. Used for process-noise covariances, which may be
/// singular (including exactly zero).
pub fn cholesky_factor_psd(a: &Mat, cfg: &KernelCfg) -> Result<Mat, KernelError> {
    if !a.is_square() {
        return Err(KernelError::ShapeMismatch { context: "cholesky_factor_psd" });
    }
    let n = a.rows();
    let scale = a.max_abs().max(1.0);
    let slack = cfg.symmetry_tol * scale;
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= cfg.pivot_floor {
            if d < -slack {
                return Err(KernelError::NotPositiveDefinite { pivot_index: j, pivot: d });
            }
            // semidefinite direction: leave the column zero
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut acc = 0.5 * (a[(i, j)] + a[(j, i)]);
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = acc / ljj;
        }
    }
    Ok(l)
}

/// Rank-one update/downdate of a Cholesky factor:
/// returns `L'` with `L'·L'ᵀ = U·Uᵀ + w·x·xᵀ`.
///
/// `w > 0` applies Givens rotations; `w < 0` applies hyperbolic rotations
/// with a per-pivot positivity check. A failed downdate pivot raises
/// [`KernelError::DowndateBreaksSpd`] rather than clamping: it indicates an
/// inconsistent covariance that the caller must repair.
pub fn chol_rank_one(u: &LowerTriangular, x: &[f64], w: f64) -> Result<LowerTriangular, KernelError> {
    chol_rank_one_with(u, x, w, &KernelCfg::default())
}

pub fn chol_rank_one_with(
    u: &LowerTriangular,
    x: &[f64],
    w: f64,
    cfg: &KernelCfg,
) -> Result<LowerTriangular, KernelError> {
    let n = u.n();
    if x.len() != n {
        return Err(KernelError::ShapeMismatch { context: "chol_rank_one" });
    }
    if !w.is_finite() {
        return Err(KernelError::ShapeMismatch { context: "chol_rank_one: non-finite weight" });
    }
    if w == 0.0 || x.iter().all(|&v| v == 0.0) {
        return Ok(u.clone());
    }

    let s = w.abs().sqrt();
    let mut v: Vec<f64> = x.iter().map(|&xi| s * xi).collect();
    let mut l = u.mat().clone();

    if w > 0.0 {
        for k in 0..n {
            let lkk = l[(k, k)];
            let r = (lkk * lkk + v[k] * v[k]).sqrt();
            let c = r / lkk;
            let sk = v[k] / lkk;
            l[(k, k)] = r;
            for i in k + 1..n {
                l[(i, k)] = (l[(i, k)] + sk * v[i]) / c;
                v[i] = c * v[i] - sk * l[(i, k)];
            }
        }
    } else {
        for k in 0..n {
            let lkk = l[(k, k)];
            let d = lkk * lkk - v[k] * v[k];
            if d <= cfg.pivot_floor {
                return Err(KernelError::DowndateBreaksSpd { pivot_index: k });
            }
            let r = d.sqrt();
            let c = r / lkk;
            let sk = v[k] / lkk;
            l[(k, k)] = r;
            for i in k + 1..n {
                l[(i, k)] = (l[(i, k)] - sk * v[i]) / c;
                v[i] = c * v[i] - sk * l[(i, k)];
            }
        }
    }
    Ok(LowerTriangular { m: l })
}

/// Householder QR of a tall matrix, returning the transposed R-factor as a
/// lower triangle: the output `L = Rᵀ` satisfies `L·Lᵀ = Aᵀ·A`.
///
/// Diagonals are forced non-negative so factors are unique and comparable.
pub fn qr_r_factor(a: &Mat) -> Result<LowerTriangular, KernelError> {
    qr_r_factor_with(a, &KernelCfg::default())
}

pub fn qr_r_factor_with(a: &Mat, cfg: &KernelCfg) -> Result<LowerTriangular, KernelError> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(KernelError::ShapeMismatch { context: "qr_r_factor: rows < cols" });
    }
    let norm_a = a.frobenius();
    let mut work = a.clone();
    let mut v = vec![0.0_f64; m];

    for k in 0..n {
        let mut norm2 = 0.0;
        for i in k..m {
            norm2 += work[(i, k)] * work[(i, k)];
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            continue; // column already zero; rank check below will flag it
        }
        let alpha = if work[(k, k)] >= 0.0 { -norm } else { norm };
        let mut vtv = 0.0;
        for i in k..m {
            v[i] = work[(i, k)];
            if i == k {
                v[i] -= alpha;
            }
            vtv += v[i] * v[i];
        }
        if vtv == 0.0 {
            continue;
        }
        for j in k..n {
            let mut t = 0.0;
            for i in k..m {
                t += v[i] * work[(i, j)];
            }
            let f = 2.0 * t / vtv;
            for i in k..m {
                work[(i, j)] -= f * v[i];
            }
        }
        work[(k, k)] = alpha;
        for i in k + 1..m {
            work[(i, k)] = 0.0;
        }
    }

    // force non-negative diagonal, check rank, transpose into lower form
    let floor = cfg.pivot_floor * norm_a;
    let mut l = Mat::zeros(n, n);
    for k in 0..n {
        let sign = if work[(k, k)] < 0.0 { -1.0 } else { 1.0 };
        if work[(k, k)].abs() < floor || work[(k, k)] == 0.0 {
            return Err(KernelError::RankDeficient { column: k });
        }
        for j in k..n {
            l[(j, k)] = sign * work[(k, j)];
        }
    }
    Ok(LowerTriangular { m: l })
}

/// Solves `(U·Uᵀ)·X = B` by two triangular solves, with `U` a valid lower
/// Cholesky factor. No explicit inverse is formed.
pub fn solve_with_factor(u: &LowerTriangular, b: &Mat) -> Mat {
    let z = u.solve_lower(b);
    u.solve_transpose(&z)
}

pub fn solve_with_factor_vec(u: &LowerTriangular, b: &[f64]) -> Vec<f64> {
    let col = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    solve_with_factor(u, &col).col(0)
}

/// LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct LuFactor {
    lu: Mat,
    perm: Vec<usize>,
    sign: f64,
}

pub fn lu_factor(a: &Mat) -> Result<LuFactor, KernelError> {
    if !a.is_square() {
        return Err(KernelError::ShapeMismatch { context: "lu_factor" });
    }
    let n = a.rows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            let cand = lu[(i, k)].abs();
            if cand > best {
                best = cand;
                p = i;
            }
        }
        if best == 0.0 {
            return Err(KernelError::Singular { pivot_index: k });
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let f = lu[(i, k)] / pivot;
            lu[(i, k)] = f;
            for j in k + 1..n {
                let delta = f * lu[(k, j)];
                lu[(i, j)] -= delta;
            }
        }
    }
    Ok(LuFactor { lu, perm, sign })
}

impl LuFactor {
    pub fn det(&self) -> f64 {
        let mut d = self.sign;
        for i in 0..self.lu.rows() {
            d *= self.lu[(i, i)];
        }
        d
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut acc = x[i];
            for k in 0..i {
                acc -= self.lu[(i, k)] * x[k];
            }
            x[i] = acc;
        }
        for ii in 0..n {
            let i = n - 1 - ii;
            let mut acc = x[i];
            for k in i + 1..n {
                acc -= self.lu[(i, k)] * x[k];
            }
            x[i] = acc / self.lu[(i, i)];
        }
        x
    }

    pub fn solve_mat(&self, b: &Mat) -> Mat {
        let mut out = Mat::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let col = self.solve_vec(&b.col(j));
            out.set_col(j, &col);
        }
        out
    }

    pub fn inverse(&self) -> Mat {
        self.solve_mat(&Mat::identity(self.lu.rows()))
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with `A = V · diag(λ) · Vᵀ`;
/// eigenvectors are the columns of `V`.
pub fn sym_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    assert!(a.is_square(), "sym_eigen expects a square matrix");
    let n = a.rows();
    let mut w = a.symmetrized();
    let mut v = Mat::identity(n);
    let tol = 1e-14 * w.max_abs().max(1.0);
    for _sweep in 0..64 {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(w[(i, j)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[(p, q)];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let wkp = w[(k, p)];
                    let wkq = w[(k, q)];
                    w[(k, p)] = c * wkp - s * wkq;
                    w[(k, q)] = s * wkp + c * wkq;
                }
                for k in 0..n {
                    let wpk = w[(p, k)];
                    let wqk = w[(q, k)];
                    w[(p, k)] = c * wpk - s * wqk;
                    w[(q, k)] = s * wpk + c * wqk;
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
    (w.diag(), v)
}
