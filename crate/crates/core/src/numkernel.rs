//! Dense linear algebra and Gaussian kernels.
//!
//! Everything here is small-dimension dense math (feature dimensions up to a
//! few hundred). Matrices are row-major `f64` buffers; covariance work goes
//! through [`SpdFactor`], which never forms an explicit inverse unless asked.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used to accept a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Default relative ridge scale: the ridge tried first is `DEFAULT_REG_SCALE * trace(m) / r`.
pub const DEFAULT_REG_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    #[error("matrix is not symmetric positive definite (ridge up to {max_ridge:e} failed)")]
    NotSpd { max_ridge: f64 },
    #[error("matrix is not symmetric within relative tolerance {SYMMETRY_TOL:e}")]
    NotSymmetric,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("empty point subset")]
    EmptySubset,
    #[error("non-finite entry in matrix or vector")]
    NonFinite,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
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

    /// Builds a matrix from a row-major buffer.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length does not match shape");
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NumError> {
        if self.cols != other.rows {
            return Err(NumError::DimMismatch { expected: self.cols, got: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, NumError> {
        if v.len() != self.cols {
            return Err(NumError::DimMismatch { expected: self.cols, got: v.len() });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, NumError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NumError::DimMismatch { expected: self.rows * self.cols, got: other.rows * other.cols });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, NumError> {
        self.add(&other.scale(-1.0))
    }

    /// Adds `delta` to every diagonal entry.
    pub fn add_ridge(&self, delta: f64) -> Matrix {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += delta;
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..self.rows {
            for j in 0..i {
                if (self[(i, j)] - self[(j, i)]).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Copies the sub-block starting at `(r0, c0)` with the given shape.
    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        let mut b = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                b[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        b
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cholesky factor `L` of a symmetric positive-definite matrix, `m + ridge·I = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdFactor {
    lower: Matrix,
    log_det: f64,
    ridge: f64,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// `log |m + ridge·I|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Diagonal ridge that had to be added before the factorization succeeded.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn was_regularized(&self) -> bool {
        self.ridge > 0.0
    }

    /// Solves `L y = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.lower.row(i);
            let mut s = b[i];
            for k in 0..i {
                s -= row[k] * b[k];
            }
            b[i] = s / row[i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward_solve(&self, y: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lower[(k, i)] * y[k];
            }
            y[i] = s / self.lower[(i, i)];
        }
    }

    /// Solves `A x = b` for the factored matrix `A`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_solve(&mut x);
        self.backward_solve(&mut x);
        x
    }

    /// Squared Mahalanobis distance `(x − mu)ᵀ A⁻¹ (x − mu)`.
    pub fn mahalanobis_sq(&self, x: &[f64], mu: &[f64]) -> f64 {
        let n = self.dim();
        let mut buf = [0.0_f64; 16];
        let mut heap;
        let z: &mut [f64] = if n <= buf.len() {
            &mut buf[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for i in 0..n {
            z[i] = x[i] - mu[i];
        }
        self.forward_solve(z);
        z.iter().map(|v| v * v).sum()
    }

    /// Explicit inverse `A⁻¹`, built column by column from triangular solves.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // symmetrize away round-off
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }

    /// `L·Lᵀ`, i.e. the (possibly ridged) matrix that was factored.
    pub fn reconstruct(&self) -> Matrix {
        self.lower.matmul(&self.lower.transpose()).expect("square factor")
    }
}

fn try_factor(m: &Matrix, ridge: f64) -> Option<SpdFactor> {
    let n = m.rows();
    let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0_f64, f64::max) + ridge;
    let pivot_floor = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    let mut log_det = 0.0;
    for j in 0..n {
        let mut d = m[(j, j)] + ridge;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > pivot_floor) {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        log_det += 2.0 * ljj.ln();
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(SpdFactor { lower: l, log_det, ridge })
}

/// Cholesky factorization with escalating ridge.
///
/// Tries `m` as is, then `m + δ·I` for `δ ∈ {reg_eps, 10·reg_eps, 100·reg_eps}`.
/// The ridge that succeeded is recorded in the returned factor. Pass
/// `reg_eps = 0` to require strict positive definiteness.
pub fn cholesky(m: &Matrix, reg_eps: f64) -> Result<SpdFactor, NumError> {
    if !m.is_square() {
        return Err(NumError::DimMismatch { expected: m.rows(), got: m.cols() });
    }
    if !m.is_finite() {
        return Err(NumError::NonFinite);
    }
    if !m.is_symmetric(SYMMETRY_TOL) {
        return Err(NumError::NotSymmetric);
    }
    if let Some(f) = try_factor(m, 0.0) {
        return Ok(f);
    }
    if reg_eps > 0.0 {
        for mult in [1.0, 10.0, 100.0] {
            if let Some(f) = try_factor(m, reg_eps * mult) {
                return Ok(f);
            }
        }
    }
    Err(NumError::NotSpd { max_ridge: 100.0 * reg_eps })
}

/// Default first ridge for `m`: `scale · trace(m) / r`.
pub fn default_reg_eps(m: &Matrix, scale: f64) -> f64 {
    scale * m.trace().max(0.0) / m.rows().max(1) as f64
}

/// Log-density of the r-variate Gaussian `N(mu, Σ)` at `x`, with `Σ` given by its factor.
pub fn mvn_logpdf(x: &[f64], mu: &[f64], sigma: &SpdFactor) -> Result<f64, NumError> {
    let r = sigma.dim();
    if x.len() != r {
        return Err(NumError::DimMismatch { expected: r, got: x.len() });
    }
    if mu.len() != r {
        return Err(NumError::DimMismatch { expected: r, got: mu.len() });
    }
    Ok(mvn_logpdf_unchecked(x, mu, sigma))
}

#[inline]
pub(crate) fn mvn_logpdf_unchecked(x: &[f64], mu: &[f64], sigma: &SpdFactor) -> f64 {
    let r = sigma.dim() as f64;
    -0.5 * r * (2.0 * PI).ln() - 0.5 * sigma.log_det() - 0.5 * sigma.mahalanobis_sq(x, mu)
}

/// Scatter matrix `Σ (x − c)(x − c)ᵀ` of a point subset about `center`.
pub fn scatter_matrix<'a, I>(points: I, center: &[f64]) -> Result<Matrix, NumError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let r = center.len();
    let mut s = Matrix::zeros(r, r);
    let mut count = 0usize;
    let mut dev = vec![0.0; r];
    for p in points {
        if p.len() != r {
            return Err(NumError::DimMismatch { expected: r, got: p.len() });
        }
        for (d, (x, c)) in dev.iter_mut().zip(p.iter().zip(center)) {
            *d = x - c;
        }
        accumulate_outer(&mut s, &dev, 1.0);
        count += 1;
    }
    if count == 0 {
        return Err(NumError::EmptySubset);
    }
    mirror_lower(&mut s);
    Ok(s)
}

/// Adds `w · v vᵀ` to the lower triangle of `s`.
#[inline]
pub(crate) fn accumulate_outer(s: &mut Matrix, v: &[f64], w: f64) {
    let r = v.len();
    for i in 0..r {
        let wi = w * v[i];
        for j in 0..=i {
            s[(i, j)] += wi * v[j];
        }
    }
}

/// Copies the lower triangle onto the upper triangle.
pub(crate) fn mirror_lower(s: &mut Matrix) {
    let r = s.rows();
    for i in 0..r {
        for j in 0..i {
            s[(j, i)] = s[(i, j)];
        }
    }
}

/// Number of unique elements of a symmetric `r × r` matrix.
pub fn unique_len(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Column-stacked lower-triangular unique elements of a symmetric matrix.
pub fn vech(s: &Matrix) -> Vec<f64> {
    let r = s.rows();
    let mut u = Vec::with_capacity(unique_len(r));
    for j in 0..r {
        for i in j..r {
            u.push(s[(i, j)]);
        }
    }
    u
}

/// Rebuilds the symmetric matrix whose `vech` is `u`.
pub fn unvech(r: usize, u: &[f64]) -> Matrix {
    assert_eq!(u.len(), unique_len(r));
    let mut s = Matrix::zeros(r, r);
    let mut k = 0;
    for j in 0..r {
        for i in j..r {
            s[(i, j)] = u[k];
            s[(j, i)] = u[k];
            k += 1;
        }
    }
    s
}

/// Column-stacking vectorization.
pub fn vec_cols(m: &Matrix) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.rows() * m.cols());
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Duplication matrix `D` (r² × r(r+1)/2) with `vec(S) = D · vech(S)` for symmetric `S`.
pub fn duplication_matrix(r: usize) -> Matrix {
    let mut d = Matrix::zeros(r * r, unique_len(r));
    let mut k = 0;
    for j in 0..r {
        for i in j..r {
            // vec position of (i, j) is j*r + i; of (j, i) is i*r + j
            d[(j * r + i, k)] = 1.0;
            d[(i * r + j, k)] = 1.0;
            k += 1;
        }
    }
    d
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca, rb, cb) = (a.rows(), a.cols(), b.rows(), b.cols());
    let mut out = Matrix::zeros(ra * rb, ca * cb);
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for p in 0..rb {
                for q in 0..cb {
                    out[(i * rb + p, j * cb + q)] = aij * b[(p, q)];
                }
            }
        }
    }
    out
}
