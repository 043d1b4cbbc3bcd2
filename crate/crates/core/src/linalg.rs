//! Small dense linear algebra: row-major matrices, Cholesky factorization,
//! triangular solves and the bordered (append-one-row) Cholesky update.
//!
//! Everything here is generic over [`Scalar`]; sizes are the design sizes of
//! a GP surrogate (hundreds), so plain row-major loops are adequate.

use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "MatrixRecord<T>")]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct MatrixRecord<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> TryFrom<MatrixRecord<T>> for Matrix<T> {
    type Error = String;
    fn try_from(r: MatrixRecord<T>) -> Result<Self, String> {
        if r.rows.checked_mul(r.cols) != Some(r.data.len()) {
            return Err(format!(
                "matrix {}x{} needs {} entries, got {}",
                r.rows,
                r.cols,
                r.rows * r.cols,
                r.data.len()
            ));
        }
        Ok(Self {
            rows: r.rows,
            cols: r.cols,
            data: r.data,
        })
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
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

    /// Builds from row-major data. Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    /// Builds from a slice of equally sized rows. An empty slice yields a 0×0 matrix.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
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

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn push_row(&mut self, row: &[T]) {
        if self.rows == 0 && self.cols == 0 {
            self.cols = row.len();
        }
        assert_eq!(row.len(), self.cols, "row length mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d = *d + a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        self.rows().map(|r| dot(r, v)).collect()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
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

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc = acc + d * d;
    }
    acc
}

/// The factorization broke down at `pivot` (non-positive or non-finite).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    pub pivot: usize,
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = a`. Only the lower
/// triangle of `a` is read.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>, NotPositiveDefinite> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky of non-square matrix");
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = {
                let (li, lj) = (&l.row(i)[..j], &l.row(j)[..j]);
                a[(i, j)] - dot(li, lj)
            };
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return Err(NotPositiveDefinite { pivot: i });
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.nrows();
    let mut x = b.to_vec();
    solve_lower_in_place(l, n, &mut x);
    x
}

/// Forward substitution restricted to the leading `n` rows of `l`.
pub fn solve_lower_in_place<T: Scalar>(l: &Matrix<T>, n: usize, x: &mut [T]) {
    for i in 0..n {
        let s = x[i] - dot(&l.row(i)[..i], &x[..i]);
        x[i] = s / l[(i, i)];
    }
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_upper_transposed<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.nrows();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        x[i] = x[i] / l[(i, i)];
        let xi = x[i];
        let row = l.row(i);
        for k in 0..i {
            x[k] = x[k] - row[k] * xi;
        }
    }
    x
}

/// Solves `(L Lᵀ) x = b`.
pub fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    solve_upper_transposed(l, &solve_lower(l, b))
}

/// `log det(L Lᵀ)`.
pub fn cholesky_log_det<T: Scalar>(l: &Matrix<T>) -> T {
    let two = T::one() + T::one();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<T>() * two
}

/// `(L Lᵀ)⁻¹`, symmetric.
pub fn cholesky_inverse<T: Scalar>(l: &Matrix<T>) -> Matrix<T> {
    let n = l.nrows();
    // row j of `wt` holds column j of W = L⁻¹
    let mut wt = Matrix::zeros(n, n);
    for j in 0..n {
        let col = wt.row_mut(j);
        col[j] = T::one() / l[(j, j)];
        for i in (j + 1)..n {
            let s = dot(&l.row(i)[j..i], &col[j..i]);
            col[i] = -s / l[(i, i)];
        }
    }
    // A⁻¹ = Wᵀ W; entry (i, j) = Σ_{k ≥ max(i,j)} W[k,i] W[k,j].
    let mut inv = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&wt.row(i)[i..], &wt.row(j)[i..]);
            inv[(i, j)] = s;
            inv[(j, i)] = s;
        }
    }
    inv
}

/// Extends a Cholesky factor of `A` (n×n) to one of the bordered matrix
/// `[[A, c], [cᵀ, d]]` in O(n²) time.
pub fn cholesky_append<T: Scalar>(
    l: &Matrix<T>,
    cross: &[T],
    diag: T,
) -> Result<Matrix<T>, NotPositiveDefinite> {
    let n = l.nrows();
    assert_eq!(cross.len(), n, "border length mismatch");
    let row = solve_lower(l, cross);
    let s = diag - dot(&row, &row);
    if !(s > T::zero()) || !s.is_finite() {
        return Err(NotPositiveDefinite { pivot: n });
    }
    let mut out = Matrix::zeros(n + 1, n + 1);
    for i in 0..n {
        out.row_mut(i)[..=i].copy_from_slice(&l.row(i)[..=i]);
    }
    out.row_mut(n)[..n].copy_from_slice(&row);
    out[(n, n)] = s.sqrt();
    Ok(out)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and a matrix whose columns are the eigenvectors.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigen-decomposition of non-square matrix");
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = m.norm();
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..i {
                off = off + m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= T::epsilon() * scale || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}
