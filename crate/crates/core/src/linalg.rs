//! Small dense matrices and a one-sided Jacobi SVD.
//!
//! Sizes here are embedding dimensions (a few hundred at most), so a
//! straightforward row-major layout with cubic algorithms is enough.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                left: rows * cols,
                right: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Stacks equally sized rows. An empty iterator yields a `0 x cols` matrix.
    pub fn from_rows<'a, I>(cols: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        let mut data = Vec::new();
        let mut n = 0;
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
            n += 1;
        }
        Ok(Matrix {
            rows: n,
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
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
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: rhs.rows,
            });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                vector::add_scaled(out.row_mut(i), a, rhs.row(k));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without materialising the transpose.
    pub fn t_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: rhs.rows,
            });
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = rhs.row(k);
            for (i, &ai) in a.iter().enumerate() {
                vector::add_scaled(out.row_mut(i), ai, b);
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `v · self`.
    pub fn left_mul(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: v.len(),
            });
        }
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            vector::add_scaled(&mut out, vi, self.row(i));
        }
        Ok(out)
    }

    /// Matrix times column vector: `self · v`.
    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok((0..self.rows).map(|i| vector::dot(self.row(i), v)).collect())
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                got: rhs.rows * rhs.cols,
            });
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn frobenius_norm(&self) -> T {
        vector::norm(&self.data)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// `‖selfᵀ·self − I‖_max`; zero for an orthogonal matrix.
    pub fn orthogonality_error(&self) -> T {
        let gram = self.t_matmul(self).expect("square product");
        let mut worst = T::zero();
        for i in 0..gram.rows {
            for j in 0..gram.cols {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((gram[(i, j)] - target).abs());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        vector::all_finite(&self.data)
    }

    fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    fn set_column(&mut self, j: usize, col: &[T]) {
        for (i, &v) in col.iter().enumerate() {
            self[(i, j)] = v;
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Thin singular value decomposition `A = U · diag(σ) · Vᵀ` with σ sorted
/// in descending order.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub v: Matrix<T>,
    /// Number of singular values above the relative rank tolerance.
    pub rank: usize,
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD of an `m x n` matrix with `m >= n`.
///
/// Columns of `U` belonging to numerically zero singular values are
/// completed to an orthonormal set by Gram-Schmidt against the standard
/// basis, in index order, so the result is deterministic even when the
/// input is rank deficient.
pub fn svd<T: Scalar>(a: &Matrix<T>) -> Result<Svd<T>> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "svd expects rows >= cols, got {m}x{n}"
        )));
    }
    // Work column-major: cols[j] is column j of the evolving U·Σ.
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = vector::dot(&cols[p], &cols[p]);
                let beta = vector::dot(&cols[q], &cols[q]);
                let gamma = vector::dot(&cols[p], &cols[q]);
                if gamma.is_zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<T> = cols.iter().map(|c| vector::norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap_or(std::cmp::Ordering::Equal));
    let top = order.first().map(|&i| sigma[i]).unwrap_or_else(T::zero);
    let tol = top * eps * T::of_usize(m.max(1)) * T::of(8.0);

    let mut u = Matrix::zeros(m, n);
    let mut vm = Matrix::zeros(n, n);
    let mut sorted_sigma = Vec::with_capacity(n);
    let mut rank = 0;
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = sigma[j];
        vm.set_column(k, &v[j]);
        if s > tol && !s.is_zero() {
            let mut col = cols[j].clone();
            vector::scale(&mut col, T::one() / s);
            u.set_column(k, &col);
            basis.push(col);
            sorted_sigma.push(s);
            rank += 1;
        } else {
            sorted_sigma.push(T::zero());
            deficient.push(k);
        }
    }
    for k in deficient {
        let col = complete_basis(&basis, m)?;
        u.set_column(k, &col);
        basis.push(col);
    }
    Ok(Svd {
        u,
        sigma: sorted_sigma,
        v: vm,
        rank,
    })
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// First standard basis vector (by index) that is not in the span of
/// `basis`, orthonormalised against it.
fn complete_basis<T: Scalar>(basis: &[Vec<T>], m: usize) -> Result<Vec<T>> {
    let threshold = T::of(1e-3);
    for e in 0..m {
        let mut cand = vec![T::zero(); m];
        cand[e] = T::one();
        // Two passes of classical Gram-Schmidt for stability.
        for _ in 0..2 {
            for b in basis {
                let proj = vector::dot(&cand, b);
                vector::add_scaled(&mut cand, -proj, b);
            }
        }
        let nrm = vector::norm(&cand);
        if nrm > threshold {
            vector::scale(&mut cand, T::one() / nrm);
            return Ok(cand);
        }
    }
    Err(Error::InvalidArgument(
        "cannot complete orthonormal basis".into(),
    ))
}
