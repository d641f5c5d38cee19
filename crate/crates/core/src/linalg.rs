//! Dense real linear algebra: a row-major [`Matrix`], a [`Vector`], and the
//! handful of kernels the rest of the crate builds on (products, traces,
//! norms, a cyclic Jacobi symmetric eigensolver and a pivoted dense solve).

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Default relative symmetry tolerance for [`sym_eig`].
pub const DEFAULT_SYM_TOL: f64 = 1e-9;
/// Default sweep budget for [`sym_eig`].
pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
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

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "elementwise op on {:?} and {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += c * other`, shapes must agree.
    pub fn axpy(&mut self, c: f64, other: &Matrix) {
        assert_eq!(self.dims(), other.dims(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// Adds `c` to every diagonal entry.
    pub fn add_diag(&mut self, c: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += c;
        }
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrize(&self) -> Matrix {
        assert!(self.is_square(), "symmetrize needs a square matrix");
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            0.5 * (self[(i, j)] + self[(j, i)])
        })
    }

    /// Largest absolute asymmetry `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
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

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in self.row_iter() {
            writeln!(f, "  {r:?}")?;
        }
        write!(f, "]")
    }
}

/// Dense vector of `f64`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    /// Wraps `data`, rejecting non-finite entries.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite vector entry at {pos}")));
        }
        Ok(Self { data })
    }

    pub(crate) fn from_vec_unchecked(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Correctly rounded sum of `values` (Shewchuk's partials), so the result
/// does not depend on summation order.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for k in 0..partials.len() {
            let mut y = partials[k];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    // Round the partials, handling the half-way case like Python's fsum.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Products with at least this many multiply-adds go through the blocked
/// SIMD kernel; smaller ones keep plain ascending-k accumulation.
const GEMM_MIN_FLOPS: usize = 32 * 32 * 32;

/// `m×k · k×n` product of strided views `(matrix, row_stride, col_stride)`,
/// or `None` when the product is too small for the blocked kernel.
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    (a, rsa, csa): (&Matrix, usize, usize),
    (b, rsb, csb): (&Matrix, usize, usize),
) -> Option<Matrix> {
    if m.saturating_mul(k).saturating_mul(n) < GEMM_MIN_FLOPS {
        return None;
    }
    let mut out = Matrix::zeros(m, n);
    // SAFETY: the views stay inside `a.data` and `b.data` because the
    // callers pass the strides of their own row-major storage, and `out`
    // is a fresh m×n row-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa as isize,
            csa as isize,
            b.data.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Some(out)
}

/// Matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul of {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (m, inner, n) = (a.rows, a.cols, b.cols);
    if let Some(out) = gemm(m, inner, n, (a, inner, 1), (b, n, 1)) {
        return Ok(out);
    }
    let mut out = Matrix::zeros(m, n);
    // i-k-j order keeps the inner loop on contiguous rows of `b` and `out`;
    // four output rows share each pass over a row of `b`. Every entry is
    // still accumulated in ascending k.
    let mut i = 0;
    while i + 4 <= m {
        let (o0, rest) = out.data[i * n..(i + 4) * n].split_at_mut(n);
        let (o1, rest) = rest.split_at_mut(n);
        let (o2, o3) = rest.split_at_mut(n);
        for k in 0..inner {
            let a0 = a.data[i * inner + k];
            let a1 = a.data[(i + 1) * inner + k];
            let a2 = a.data[(i + 2) * inner + k];
            let a3 = a.data[(i + 3) * inner + k];
            if a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            let rows = o0
                .iter_mut()
                .zip(o1.iter_mut())
                .zip(o2.iter_mut())
                .zip(o3.iter_mut());
            for ((((x0, x1), x2), x3), &bkj) in rows.zip(b_row) {
                *x0 += a0 * bkj;
                *x1 += a1 * bkj;
                *x2 += a2 * bkj;
                *x3 += a3 * bkj;
            }
        }
        i += 4;
    }
    for i in i..m {
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for k in 0..inner {
            let aik = a.data[i * inner + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::Shape(format!(
            "matmul_tn of {}x{} (transposed) and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if let Some(out) = gemm(a.cols, a.rows, b.cols, (a, 1, a.cols), (b, b.cols, 1)) {
        return Ok(out);
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let a_row = a.row(k);
        let b_row = b.row(k);
        for (i, &aki) in a_row.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::Shape(format!(
            "matmul_nt of {}x{} and {}x{} (transposed)",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if let Some(out) = gemm(a.rows, a.cols, b.rows, (a, a.cols, 1), (b, 1, b.cols)) {
        return Ok(out);
    }
    Ok(Matrix::from_fn(a.rows, b.rows, |i, j| {
        dot(a.row(i), b.row(j))
    }))
}

/// Sum of the diagonal.
pub fn trace(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "trace of non-square {}x{}",
            a.rows, a.cols
        )));
    }
    Ok((0..a.rows).map(|i| a[(i, i)]).sum())
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖a - b‖_F / ‖b‖_F`, or the absolute difference when `b` is zero.
pub fn rel_frobenius_error(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.dims(), b.dims(), "rel_frobenius_error shape mismatch");
    let diff: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let base = frobenius_norm(b);
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

/// Symmetric eigendecomposition `a = Q Λ Qᵀ` with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vector,
    /// Orthogonal matrix whose columns are the eigenvectors.
    pub q: Matrix,
    pub sweeps: usize,
}

impl SymEig {
    /// Rebuilds `Q f(Λ) Qᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.q.rows();
        let scaled: Vec<f64> = self.eigenvalues.as_slice().iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            let qi = self.q.row(i);
            for j in i..n {
                let qj = self.q.row(j);
                let mut s = 0.0;
                for k in 0..n {
                    s += qi[k] * scaled[k] * qj[k];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(|l| l)
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// The input is symmetrized as `(A + Aᵀ)/2` after checking
/// `|a_ij - a_ji| <= tol·‖a‖_F`. Sweeps stop once the off-diagonal mass drops
/// to machine precision relative to `‖a‖_F`; if `max_sweeps` runs out first
/// the result is still accepted when the off-diagonal norm is within
/// `tol·‖a‖_F`. Eigenvalues are sorted ascending (stable among ties) and the
/// columns of `Q` are permuted to match.
pub fn sym_eig(a: &Matrix, tol: f64, max_sweeps: usize) -> Result<SymEig> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "sym_eig of non-square {}x{}",
            a.rows, a.cols
        )));
    }
    if !a.all_finite() {
        return Err(Error::Domain("sym_eig input has non-finite entries".into()));
    }
    let n = a.rows;
    let norm = frobenius_norm(a);
    let asym = a.asymmetry();
    if asym > tol * norm {
        return Err(Error::Domain(format!(
            "matrix is not symmetric: max |a_ij - a_ji| = {asym:e} exceeds {:e}",
            tol * norm
        )));
    }

    let mut m = a.symmetrize();
    // Eigenvectors are accumulated as rows so rotations touch contiguous memory.
    let mut vt = Matrix::identity(n);
    let target = f64::EPSILON * norm;
    let mut sweeps = 0;

    let off_norm = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += m[(i, j)] * m[(i, j)];
            }
        }
        (2.0 * s).sqrt()
    };

    // Round-robin pairing: each round is a set of disjoint (p, q) planes, so
    // all of its rotations can be applied as two passes of row operations.
    let slots = n + n % 2;
    let mut ring: Vec<usize> = (0..slots).collect();
    let mut rots: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(slots / 2);
    let mut fixes: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(slots / 2);

    let mut off = off_norm(&m);
    while off > target && sweeps < max_sweeps {
        sweeps += 1;
        for _round in 0..slots.saturating_sub(1) {
            rots.clear();
            fixes.clear();
            for k in 0..slots / 2 {
                let (a, b) = (ring[k], ring[slots - 1 - k]);
                if a >= n || b >= n {
                    continue;
                }
                let (p, q) = (a.min(b), a.max(b));
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Negligible relative to both diagonal entries: drop it.
                if sweeps > 4
                    && (app.abs() + 100.0 * apq.abs() == app.abs())
                    && (aqq.abs() + 100.0 * apq.abs() == aqq.abs())
                {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.0
                };
                if t == 0.0 {
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                rots.push((p, q, c, t * c));
                fixes.push((p, q, app - t * apq, aqq + t * apq));
            }
            if !rots.is_empty() {
                for &(p, q, c, s) in &rots {
                    rotate_rows(&mut m, p, q, c, s);
                    rotate_rows(&mut vt, p, q, c, s);
                }
                for i in 0..n {
                    let row = m.row_mut(i);
                    for &(p, q, c, s) in &rots {
                        let (a, b) = (row[p], row[q]);
                        row[p] = c * a - s * b;
                        row[q] = s * a + c * b;
                    }
                }
                for &(p, q, dp, dq) in &fixes {
                    m[(p, p)] = dp;
                    m[(q, q)] = dq;
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                }
            }
            ring[1..].rotate_right(1);
        }
        off = off_norm(&m);
    }
    if off > target && off > tol * norm {
        return Err(Error::Convergence {
            iterations: sweeps,
            residual: off / norm.max(f64::MIN_POSITIVE),
        });
    }

    let values = m.diag();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let eigenvalues = Vector::from_vec_unchecked(order.iter().map(|&i| values[i]).collect());
    let q = Matrix::from_fn(n, n, |row, col| vt[(order[col], row)]);
    Ok(SymEig {
        eigenvalues,
        q,
        sweeps,
    })
}

/// [`sym_eig`] with the default tolerance and sweep budget.
pub fn sym_eig_default(a: &Matrix) -> Result<SymEig> {
    sym_eig(a, DEFAULT_SYM_TOL, DEFAULT_MAX_SWEEPS)
}

/// Rows `p, q` ← `(c·p − s·q, s·p + c·q)`.
fn rotate_rows(vt: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = vt.cols;
    let (lo, hi) = vt.data.split_at_mut(q * n);
    let row_p = &mut lo[p * n..(p + 1) * n];
    let row_q = &mut hi[..n];
    for (vp, vq) in row_p.iter_mut().zip(row_q.iter_mut()) {
        let a = *vp;
        let b = *vq;
        *vp = c * a - s * b;
        *vq = s * a + c * b;
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// A pivot smaller than `n · ε · max|a|` is reported as singular.
pub fn solve_dense(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows;
    if !a.is_square() || b.len() != n {
        return Err(Error::Shape(format!(
            "solve of {}x{} with rhs of length {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tiny = (n as f64) * f64::EPSILON * scale;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .unwrap_or(col);
        if m[(pivot, col)].abs() <= tiny {
            return Err(Error::Singular(col));
        }
        if pivot != col {
            for k in 0..n {
                m.data.swap(pivot * n + k, col * n + k);
            }
            x.swap(pivot, col);
        }
        let d = m[(col, col)];
        for r in (col + 1)..n {
            let f = m[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m.data[r * n + k] -= f * m.data[col * n + k];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for k in (col + 1)..n {
            s -= m[(col, k)] * x[k];
        }
        x[col] = s / m[(col, col)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_matrix, random_symmetric};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matmul_identity_and_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(3, 3, &mut rng);
        assert_eq!(matmul(&Matrix::identity(3), &x).unwrap(), x);
        let p = matmul(
            &Matrix::from_diag(&[2.0, 3.0]),
            &Matrix::from_diag(&[5.0, 7.0]),
        )
        .unwrap();
        assert_eq!(p, Matrix::from_diag(&[10.0, 21.0]));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(4, 5, &mut rng);
        let b = random_matrix(5, 3, &mut rng);
        let mut naive = Matrix::zeros(4, 3);
        for i in 0..4 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += a[(i, k)] * b[(k, j)];
                }
                naive[(i, j)] = s;
            }
        }
        assert_eq!(matmul(&a, &b).unwrap(), naive);
        // Transposed variants agree with the explicit transpose.
        let at = a.transpose();
        assert!(rel_frobenius_error(&matmul_tn(&at, &b).unwrap(), &naive) < 1e-15);
        let bt = b.transpose();
        assert!(rel_frobenius_error(&matmul_nt(&a, &bt).unwrap(), &naive) < 1e-15);
    }

    #[test]
    fn matmul_shape_error() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn trace_cases() {
        assert_eq!(trace(&Matrix::identity(4)).unwrap(), 4.0);
        assert_eq!(trace(&Matrix::from_diag(&[1.0, 2.0, 3.0])).unwrap(), 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(6, 6, &mut rng);
        let mut s = 0.0;
        for i in 0..6 {
            s += a.as_slice()[i * 6 + i];
        }
        assert_eq!(trace(&a).unwrap(), s);
        assert!(trace(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn frobenius_cases() {
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 3)), 0.0);
        assert_eq!(frobenius_norm(&Matrix::identity(4)), 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(3, 3, &mut rng);
        let mut s = 0.0;
        for v in a.as_slice() {
            s += v * v;
        }
        assert_eq!(frobenius_norm(&a), s.sqrt());
    }

    #[test]
    fn from_vec_rejects_bad_input() {
        assert!(matches!(
            Matrix::from_vec(2, 2, vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            Matrix::from_vec(1, 2, vec![0.0, f64::NAN]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig_default(&Matrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 1.0, 1.0]);
        assert!(rel_frobenius_error(&e.reconstruct(), &Matrix::identity(3)) < 1e-14);

        let e = sym_eig_default(&Matrix::from_diag(&[4.0, 1.0])).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[1.0, 4.0]);
        // Q is a permutation of the identity.
        for col in 0..2 {
            let c = e.q.column(col);
            let ones = c.iter().filter(|v| v.abs() == 1.0).count();
            let zeros = c.iter().filter(|v| **v == 0.0).count();
            assert_eq!((ones, zeros), (1, 1));
        }
    }

    #[test]
    fn eig_random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_symmetric(8, &mut rng);
        let e = sym_eig_default(&a).unwrap();
        assert!(rel_frobenius_error(&e.reconstruct(), &a) <= 1e-10);
        let qtq = matmul_tn(&e.q, &e.q).unwrap();
        assert!(frobenius_norm(&qtq.sub(&Matrix::identity(8)).unwrap()) <= 1e-12);
        let ev = e.eigenvalues.as_slice();
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eig_rejects_asymmetric_and_non_square() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig_default(&a), Err(Error::Domain(_))));
        assert!(matches!(
            sym_eig_default(&Matrix::zeros(2, 3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn eig_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_symmetric(12, &mut rng);
        let err = sym_eig(&a, 1e-14, 1).unwrap_err();
        assert!(matches!(err, Error::Convergence { iterations: 1, .. }));
    }

    #[test]
    fn eig_zero_matrix() {
        let e = sym_eig_default(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(e.eigenvalues.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn exact_sum_is_order_independent() {
        assert_eq!(exact_sum([1e16, 1.0, -1e16]), 1.0);
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = random_matrix(1, 200, &mut rng).into_vec();
        let mut rev = v.clone();
        rev.reverse();
        assert_eq!(exact_sum(v.iter().copied()), exact_sum(rev));
    }

    #[test]
    fn solve_dense_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(6, 6, &mut rng);
        let x: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let b: Vec<f64> = (0..6).map(|i| dot(a.row(i), &x)).collect();
        let got = solve_dense(&a, &b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-10);
        }
        let singular = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert!(matches!(
            solve_dense(&singular, &[1.0, 2.0]),
            Err(Error::Singular(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn matmul_is_associative(seed in any::<u64>(), n in 1usize..7, m in 1usize..7, k in 1usize..7, l in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(n, m, &mut rng);
            let b = random_matrix(m, k, &mut rng);
            let c = random_matrix(k, l, &mut rng);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            prop_assert!(rel_frobenius_error(&left, &right) <= 1e-10);
        }

        #[test]
        fn eig_shift_moves_eigenvalues(seed in any::<u64>(), n in 1usize..10, c in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_symmetric(n, &mut rng);
            let mut shifted = a.clone();
            shifted.add_diag(c);
            let e0 = sym_eig_default(&a).unwrap();
            let e1 = sym_eig_default(&shifted).unwrap();
            for (x, y) in e0.eigenvalues.as_slice().iter().zip(e1.eigenvalues.as_slice()) {
                prop_assert!((x + c - y).abs() <= 1e-10 * (1.0 + y.abs()));
            }
        }
    }
}
