//! Small dense and sparse complex linear algebra.
//!
//! Dimensions here never exceed a few thousand, so a row-major dense LU with
//! partial pivoting and a plain CSR matrix are all the solvers need.

use crate::num::{cr, Real, C};

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<R: Real> {
    rows: usize,
    cols: usize,
    data: Vec<C<R>>,
}

impl<R: Real> DenseMatrix<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C::new(R::zero(), R::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = cr(R::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<R>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C<R>>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self { rows, cols, data }
    }

    /// `|a><b|`.
    pub fn outer(a: &[C<R>], b: &[C<R>]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
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

    pub fn as_slice(&self) -> &[C<R>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C<R>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C<R>> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C<R>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C<R>] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C<R> {
        (0..self.rows.min(self.cols)).fold(cr(R::zero()), |acc, i| acc + self[(i, i)])
    }

    pub fn max_abs(&self) -> R {
        self.data.iter().fold(R::zero(), |m, z| m.max(z.norm()))
    }

    pub fn scale(&self, s: C<R>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| *z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a + *b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a - *b).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.re == R::zero() && a.im == R::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d = *d + a * *b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C<R>]) -> Vec<C<R>> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(cr(R::zero()), |acc, (a, b)| acc + *a * *b)
            })
            .collect()
    }

    /// Largest entry of `|A - A^dagger|`.
    pub fn hermiticity_error(&self) -> R {
        let mut err = R::zero();
        for i in 0..self.rows {
            for j in i..self.cols {
                err = err.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        err
    }

    /// Replace the matrix by `(A + A^dagger)/2`.
    pub fn symmetrize(&mut self) {
        let half = R::lit(0.5);
        for i in 0..self.rows {
            for j in i..self.cols {
                let avg = (self[(i, j)] + self[(j, i)].conj()) * half;
                self[(i, j)] = avg;
                self[(j, i)] = avg.conj();
            }
        }
    }

    /// True when the Hermitian part of `self + shift * I` admits a Cholesky
    /// factorization, i.e. its smallest eigenvalue exceeds `-shift`.
    pub fn is_positive_semidefinite(&self, shift: R) -> bool {
        assert!(self.is_square());
        let n = self.rows;
        let mut l = DenseMatrix::<R>::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)].re + shift;
            for k in 0..j {
                d = d - l[(j, k)].norm_sqr();
            }
            if d.is_nan() || d <= R::zero() {
                return false;
            }
            let djj = d.sqrt();
            l[(j, j)] = cr(djj);
            for i in (j + 1)..n {
                let mut s = (self[(i, j)] + self[(j, i)].conj()) * R::lit(0.5);
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        true
    }

    /// LU factorization with partial pivoting.
    pub fn lu(mut self) -> Result<LuFactor<R>, SingularMatrix> {
        assert!(self.is_square(), "LU requires a square matrix");
        let n = self.rows;
        let scale = self.max_abs();
        let tiny = R::epsilon() * scale * R::from_usize_lossy(n.max(1));
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = self[(k, k)].norm();
            for i in (k + 1)..n {
                let v = self[(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) || scale == R::zero() {
                return Err(SingularMatrix {
                    column: k,
                    pivot: best.to_f64_lossy(),
                });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    self.data.swap(p * n + j, k * n + j);
                }
            }
            let (upper, lower) = self.data.split_at_mut((k + 1) * n);
            let pivot_row = &upper[k * n..(k + 1) * n];
            let inv = pivot_row[k].inv();
            for row in lower.chunks_exact_mut(n) {
                let factor = row[k] * inv;
                if factor.re == R::zero() && factor.im == R::zero() {
                    continue;
                }
                row[k] = factor;
                for (dst, src) in row[k + 1..].iter_mut().zip(&pivot_row[k + 1..]) {
                    *dst = *dst - factor * *src;
                }
            }
        }
        Ok(LuFactor { lu: self, perm })
    }
}

impl<R: Real> std::ops::Index<(usize, usize)> for DenseMatrix<R> {
    type Output = C<R>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C<R> {
        &self.data[i * self.cols + j]
    }
}

impl<R: Real> std::ops::IndexMut<(usize, usize)> for DenseMatrix<R> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<R> {
        &mut self.data[i * self.cols + j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularMatrix {
    pub column: usize,
    pub pivot: f64,
}

/// Packed LU factors, `P A = L U` with unit-diagonal `L`.
#[derive(Clone, Debug)]
pub struct LuFactor<R: Real> {
    lu: DenseMatrix<R>,
    perm: Vec<usize>,
}

impl<R: Real> LuFactor<R> {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[C<R>]) -> Vec<C<R>> {
        let n = self.dim();
        assert_eq!(b.len(), n, "rhs length mismatch");
        let mut x: Vec<C<R>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in 0..i {
                s = s - row[j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in (i + 1)..n {
                s = s - row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        x
    }
}

/// Solve `A x = b`, refining once against the original matrix when the
/// residual is above `rel_tol * |b|`. Returns the solution and its final
/// relative residual.
pub fn solve_refined<R: Real>(
    a: &DenseMatrix<R>,
    b: &[C<R>],
    rel_tol: R,
) -> Result<(Vec<C<R>>, R), SingularMatrix> {
    let lu = a.clone().lu()?;
    let mut x = lu.solve(b);
    let bnorm = crate::num::norm(b);
    let rel = |x: &[C<R>]| -> (Vec<C<R>>, R) {
        let ax = a.matvec(x);
        let r: Vec<C<R>> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
        let rn = crate::num::norm(&r);
        let rel = if bnorm > R::zero() { rn / bnorm } else { rn };
        (r, rel)
    };
    let (mut r, mut res) = rel(&x);
    for _ in 0..2 {
        if res <= rel_tol {
            break;
        }
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi = *xi + *di;
        }
        let next = rel(&x);
        r = next.0;
        res = next.1;
    }
    Ok((x, res))
}

/// Compressed sparse row complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<R: Real> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C<R>>,
}

impl<R: Real> SparseMatrix<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from `(row, col, value)` triplets. Duplicates are summed and
    /// exact zeros dropped; storage order is by row, then column, whatever
    /// the input order.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, C<R>)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<C<R>> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut row_of = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            assert!(i < rows && j < cols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                let top = values.len() - 1;
                values[top] = values[top] + v;
            } else {
                indices.push(j);
                values.push(v);
                row_of.push(i);
                last = Some((i, j));
            }
        }
        let zero = C::new(R::zero(), R::zero());
        let mut kept_idx = Vec::with_capacity(indices.len());
        let mut kept_val = Vec::with_capacity(values.len());
        for ((j, v), i) in indices.into_iter().zip(values).zip(row_of) {
            if v != zero {
                kept_idx.push(j);
                kept_val.push(v);
                indptr[i + 1] += 1;
            }
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            rows,
            cols,
            indptr,
            indices: kept_idx,
            values: kept_val,
        }
    }

    pub fn from_dense(m: &DenseMatrix<R>) -> Self {
        let mut t = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                t.push((i, j, m[(i, j)]));
            }
        }
        Self::from_triplets(m.rows(), m.cols(), t)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, cr(R::one()))).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `i` as `(col, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C<R>)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C<R>)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> C<R> {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(p) => self.values[span.start + p],
            Err(_) => C::new(R::zero(), R::zero()),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<R> {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.cols,
            self.rows,
            self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect(),
        )
    }

    pub fn scale(&self, s: C<R>) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = *v * s;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets());
        Self::from_triplets(self.rows, self.cols, t)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(cr(-R::one())))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "sparse matmul shape mismatch");
        let mut t = Vec::new();
        for i in 0..self.rows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    t.push((i, j, a * b));
                }
            }
        }
        Self::from_triplets(self.rows, other.cols, t)
    }

    pub fn matvec(&self, x: &[C<R>]) -> Vec<C<R>> {
        let mut y = vec![C::new(R::zero(), R::zero()); self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[C<R>], y: &mut [C<R>]) {
        assert_eq!(x.len(), self.cols, "matvec shape mismatch");
        for (i, yi) in y.iter_mut().enumerate().take(self.rows) {
            *yi = self.row(i).fold(C::new(R::zero(), R::zero()), |acc, (j, v)| acc + v * x[j]);
        }
    }

    /// `out += s * A M` for dense row-major `M` (`cols x m` stored flat).
    pub fn mul_dense_add(&self, m: &[C<R>], m_cols: usize, s: C<R>, out: &mut [C<R>]) {
        for i in 0..self.rows {
            let dst = &mut out[i * m_cols..(i + 1) * m_cols];
            for (k, a) in self.row(i) {
                let f = a * s;
                let src = &m[k * m_cols..(k + 1) * m_cols];
                for (d, b) in dst.iter_mut().zip(src) {
                    *d = *d + f * *b;
                }
            }
        }
    }

    /// `out += s * M A^dagger` for dense row-major `M` (`m_rows x cols`).
    pub fn dense_mul_adjoint_add(&self, m: &[C<R>], m_rows: usize, s: C<R>, out: &mut [C<R>]) {
        let n_out = self.rows;
        for r in 0..m_rows {
            let src = &m[r * self.cols..(r + 1) * self.cols];
            let dst = &mut out[r * n_out..(r + 1) * n_out];
            for (j, d) in dst.iter_mut().enumerate() {
                let acc = self
                    .row(j)
                    .fold(C::new(R::zero(), R::zero()), |acc, (k, a)| acc + src[k] * a.conj());
                *d = *d + s * acc;
            }
        }
    }

    /// Dense copy of the sub-block selected by `row_idx` x `col_idx`.
    pub fn block(&self, row_idx: &[usize], col_idx: &[usize]) -> DenseMatrix<R> {
        let mut pos = vec![usize::MAX; self.cols];
        for (p, &j) in col_idx.iter().enumerate() {
            pos[j] = p;
        }
        let mut m = DenseMatrix::zeros(row_idx.len(), col_idx.len());
        for (r, &i) in row_idx.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    m[(r, pos[j])] = v;
                }
            }
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Self) -> R {
        self.sub(other).values.iter().fold(R::zero(), |m, z| m.max(z.norm()))
    }
}
