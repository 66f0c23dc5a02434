//! Dense real matrix kernels in row-major storage.
//!
//! Everything is IEEE double precision by default; the same kernels are
//! available in single precision through the [`Scalar`] type parameter so
//! precision-sensitivity experiments can run both. All kernels use a fixed
//! summation order (plain left-to-right loops, or the fixed four-way tree in
//! [`dot`]), so results are bitwise deterministic for a given input on a
//! given build.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_traits::Float;

use crate::error::{Error, Result};

/// Scalar types the kernels are instantiated for (`f64` by default, `f32`
/// behind the precision switch).
pub trait Scalar:
    Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + fmt::Display
    + fmt::Debug
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    const NAME: &'static str = "double";
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "single";
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Dense matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix<T: Scalar = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
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

    /// Builds a matrix from row-major data, validating the shape and that
    /// every entry is finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{} entries for a {rows}x{cols} matrix", data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("{rows}x{cols} matrix construction"),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Internal constructor for kernel outputs; skips the finiteness scan.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
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

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            let src = self.row(i);
            for j in 0..self.cols {
                out.data[j * self.rows + i] = src[j];
            }
        }
        out
    }

    /// `self * b`. Loop order i-k-j: inner loop runs over contiguous rows of
    /// `b` and the output, one fixed summation order per output entry.
    pub fn matmul(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != b.rows {
            return Err(Error::shape(
                "matmul",
                format!(
                    "{}x{} * {}x{}",
                    self.rows, self.cols, b.rows, b.cols
                ),
            ));
        }
        let n = b.cols;
        let mut out = vec![T::zero(); self.rows * n];
        for i in 0..self.rows {
            let arow = self.row(i);
            let crow = &mut out[i * n..(i + 1) * n];
            for (k, &aik) in arow.iter().enumerate() {
                let brow = &b.data[k * n..(k + 1) * n];
                for (c, &bv) in crow.iter_mut().zip(brow) {
                    *c = *c + aik * bv;
                }
            }
        }
        Ok(Matrix::from_raw(self.rows, n, out))
    }

    /// `self^T * b`, without materializing the transpose.
    pub fn matmul_tn(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        if self.rows != b.rows {
            return Err(Error::shape(
                "matmul_tn",
                format!(
                    "{}x{}^T * {}x{}",
                    self.rows, self.cols, b.rows, b.cols
                ),
            ));
        }
        let (m, n) = (self.cols, b.cols);
        let mut out = vec![T::zero(); m * n];
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = b.row(k);
            for (i, &aki) in arow.iter().enumerate() {
                let crow = &mut out[i * n..(i + 1) * n];
                for (c, &bv) in crow.iter_mut().zip(brow) {
                    *c = *c + aki * bv;
                }
            }
        }
        Ok(Matrix::from_raw(m, n, out))
    }

    /// `self * b^T`. Row-by-row dot products; both operands are traversed
    /// contiguously.
    pub fn matmul_nt(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != b.cols {
            return Err(Error::shape(
                "matmul_nt",
                format!(
                    "{}x{} * {}x{}^T",
                    self.rows, self.cols, b.rows, b.cols
                ),
            ));
        }
        let n = b.rows;
        let mut out = Vec::with_capacity(self.rows * n);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..n {
                out.push(dot(arow, b.row(j)));
            }
        }
        Ok(Matrix::from_raw(self.rows, n, out))
    }

    pub fn add(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        self.zip_with("add", b, |x, y| x + y)
    }

    pub fn sub(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        self.zip_with("sub", b, |x, y| x - y)
    }

    pub fn scale(&self, s: T) -> Matrix<T> {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, b: &Matrix<T>) -> Result<()> {
        if self.rows != b.rows || self.cols != b.cols {
            return Err(Error::shape(
                "add_assign",
                format!("{}x{} += {}x{}", self.rows, self.cols, b.rows, b.cols),
            ));
        }
        for (x, &y) in self.data.iter_mut().zip(&b.data) {
            *x += y;
        }
        Ok(())
    }

    /// `self += s * b`, the elementwise accumulate used by gradient sums.
    pub fn axpy(&mut self, s: T, b: &Matrix<T>) -> Result<()> {
        if self.rows != b.rows || self.cols != b.cols {
            return Err(Error::shape(
                "axpy",
                format!("{}x{} += s*{}x{}", self.rows, self.cols, b.rows, b.cols),
            ));
        }
        for (x, &y) in self.data.iter_mut().zip(&b.data) {
            *x = *x + s * y;
        }
        Ok(())
    }

    fn zip_with(&self, op: &'static str, b: &Matrix<T>, f: impl Fn(T, T) -> T) -> Result<Matrix<T>> {
        if self.rows != b.rows || self.cols != b.cols {
            return Err(Error::shape(
                op,
                format!("{}x{} vs {}x{}", self.rows, self.cols, b.rows, b.cols),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> T {
        let mut acc = T::zero();
        for &v in &self.data {
            acc = acc + v * v;
        }
        acc.sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Right-multiplication by a diagonal of the given entries: scales
    /// column `j` by `diag[j]`.
    pub fn scale_columns(&self, diag: &[T]) -> Result<Matrix<T>> {
        if diag.len() != self.cols {
            return Err(Error::shape(
                "scale_columns",
                format!("{} diagonal entries for {} columns", diag.len(), self.cols),
            ));
        }
        let mut out = self.clone();
        for i in 0..out.rows {
            for (v, &d) in out.row_mut(i).iter_mut().zip(diag) {
                *v *= d;
            }
        }
        Ok(out)
    }

    /// Solves `self * X = rhs` by LU factorization with partial pivoting.
    pub fn solve(&self, rhs: &Matrix<T>) -> Result<Matrix<T>> {
        self.lu()?.solve(rhs)
    }

    /// LU factorization with partial pivoting. Fails if a pivot is exactly
    /// zero after row exchange.
    pub fn lu(&self) -> Result<Lu<T>> {
        if !self.is_square() {
            return Err(Error::shape(
                "lu",
                format!("{}x{} is not square", self.rows, self.cols),
            ));
        }
        let n = self.rows;
        let mut f = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            // pivot: first row with the largest magnitude in this column
            let mut pivot_row = col;
            let mut pivot_mag = f[col * n + col].abs();
            for r in col + 1..n {
                let mag = f[r * n + col].abs();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = r;
                }
            }
            if pivot_mag == T::zero() {
                return Err(Error::Singular { col });
            }
            if pivot_row != col {
                for j in 0..n {
                    f.swap(col * n + j, pivot_row * n + j);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = f[col * n + col];
            for r in col + 1..n {
                let mult = f[r * n + col] / pivot;
                f[r * n + col] = mult;
                let (upper, lower) = f.split_at_mut(r * n);
                let prow = &upper[col * n + col + 1..col * n + n];
                let rrow = &mut lower[col + 1..n];
                for (rv, &pv) in rrow.iter_mut().zip(prow) {
                    *rv = *rv - mult * pv;
                }
            }
        }
        Ok(Lu {
            n,
            factors: f,
            perm,
        })
    }
}

impl<T: Scalar> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product with a fixed four-lane reduction tree. The split is by index
/// stride, so the combine order never depends on data values.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] = acc[0] + a[i] * b[i];
        acc[1] = acc[1] + a[i + 1] * b[i + 1];
        acc[2] = acc[2] + a[i + 2] * b[i + 2];
        acc[3] = acc[3] + a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail = tail + a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

/// LU factors of a square matrix, `P*A = L*U` with unit-diagonal `L`.
pub struct Lu<T: Scalar> {
    n: usize,
    factors: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    /// Solves `A * X = rhs` for every column of `rhs`.
    pub fn solve(&self, rhs: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.n;
        if rhs.rows() != n {
            return Err(Error::shape(
                "lu_solve",
                format!("{n}x{n} vs rhs {}x{}", rhs.rows(), rhs.cols()),
            ));
        }
        let ncols = rhs.cols();
        // apply the row permutation to the right-hand side
        let mut x = Matrix::<T>::zeros(n, ncols);
        for i in 0..n {
            x.row_mut(i).copy_from_slice(rhs.row(self.perm[i]));
        }
        // forward substitution with unit-diagonal L
        for i in 1..n {
            for k in 0..i {
                let l = self.factors[i * n + k];
                let (above, below) = x.data.split_at_mut(i * ncols);
                let src = &above[k * ncols..(k + 1) * ncols];
                for (xv, &sv) in below[..ncols].iter_mut().zip(src) {
                    *xv = *xv - l * sv;
                }
            }
        }
        // back substitution with U
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.factors[i * n + k];
                let (above, below) = x.data.split_at_mut((i + 1) * ncols);
                let dst = &mut above[i * ncols..(i + 1) * ncols];
                let src = &below[(k - i - 1) * ncols..(k - i) * ncols];
                for (xv, &sv) in dst.iter_mut().zip(src) {
                    *xv = *xv - u * sv;
                }
            }
            let d = self.factors[i * n + i];
            for xv in x.row_mut(i) {
                *xv /= d;
            }
        }
        Ok(x)
    }

    /// Solves `A^T * X = rhs` using the same factors: `A^T = U^T L^T P`.
    pub fn solve_transposed(&self, rhs: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.n;
        if rhs.rows() != n {
            return Err(Error::shape(
                "lu_solve_transposed",
                format!("{n}x{n}^T vs rhs {}x{}", rhs.rows(), rhs.cols()),
            ));
        }
        let ncols = rhs.cols();
        let mut y = rhs.clone();
        // forward substitution with U^T (lower triangular, diagonal of U)
        for i in 0..n {
            let d = self.factors[i * n + i];
            for yv in y.row_mut(i) {
                *yv /= d;
            }
            for k in i + 1..n {
                let u = self.factors[i * n + k];
                let (above, below) = y.data.split_at_mut((i + 1) * ncols);
                let src = &above[i * ncols..(i + 1) * ncols];
                let dst = &mut below[(k - i - 1) * ncols..(k - i) * ncols];
                for (yv, &sv) in dst.iter_mut().zip(src) {
                    *yv = *yv - u * sv;
                }
            }
        }
        // back substitution with L^T (unit upper triangular)
        for i in (0..n).rev() {
            for k in i + 1..n {
                let l = self.factors[k * n + i];
                let (above, below) = y.data.split_at_mut((i + 1) * ncols);
                let dst = &mut above[i * ncols..(i + 1) * ncols];
                let src = &below[(k - i - 1) * ncols..(k - i) * ncols];
                for (yv, &sv) in dst.iter_mut().zip(src) {
                    *yv = *yv - l * sv;
                }
            }
        }
        // undo the permutation: x[perm[i]] = y[i]
        let mut x = Matrix::<T>::zeros(n, ncols);
        for i in 0..n {
            x.row_mut(self.perm[i]).copy_from_slice(y.row(i));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_skew(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = -v;
            }
        }
        a
    }

    /// Naive triple-loop product, the independent oracle for matmul.
    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    #[test]
    fn matmul_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng, 3, 3);
        let id = Matrix::identity(3);
        let p = id.matmul(&m).unwrap();
        assert_eq!(p, m);
    }

    #[test]
    fn matmul_rotation_composition() {
        let r = Matrix::from_vec(2, 2, vec![0.0, 1.0, -1.0, 0.0]).unwrap();
        let p = r.matmul(&r).unwrap();
        let expected = Matrix::from_vec(2, 2, vec![-1.0, 0.0, 0.0, -1.0]).unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 5, 5);
        let b = random_matrix(&mut rng, 5, 5);
        let fast = a.matmul(&b).unwrap();
        let slow = naive_matmul(&a, &b);
        for i in 0..5 {
            for j in 0..5 {
                assert!((fast[(i, j)] - slow[(i, j)]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn matmul_transposed_variants_match_explicit_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 4, 6);
        let b = random_matrix(&mut rng, 4, 5);
        let tn = a.matmul_tn(&b).unwrap();
        let explicit = a.transpose().matmul(&b).unwrap();
        let err = tn.sub(&explicit).unwrap().fro_norm();
        assert!(err < 1e-14);

        let c = random_matrix(&mut rng, 3, 6);
        let nt = a.matmul_nt(&c).unwrap();
        let explicit = a.matmul(&c.transpose()).unwrap();
        let err = nt.sub(&explicit).unwrap().fro_norm();
        assert!(err < 1e-14);
    }

    #[test]
    fn matmul_associative_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 6, 6);
            let b = random_matrix(&mut rng, 6, 6);
            let c = random_matrix(&mut rng, 6, 6);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let rel = left.sub(&right).unwrap().fro_norm() / left.fro_norm();
            assert!(rel < 1e-12, "associativity rel error {rel}");
        }
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&b),
            Err(Error::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rhs = random_matrix(&mut rng, 4, 3);
        let x = Matrix::identity(4).solve(&rhs).unwrap();
        let err = x.sub(&rhs).unwrap().fro_norm();
        assert!(err < 1e-15);
    }

    #[test]
    fn solve_2x2_known_inverse() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 1.0, -1.0, 1.0]).unwrap();
        let x = m.solve(&Matrix::identity(2)).unwrap();
        let expected = Matrix::from_vec(2, 2, vec![0.5, -0.5, 0.5, 0.5]).unwrap();
        assert!(x.sub(&expected).unwrap().fro_norm() < 1e-15);
    }

    #[test]
    fn solve_residual_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let m = random_matrix(&mut rng, 12, 12)
                .add(&Matrix::identity(12).scale(3.0))
                .unwrap();
            let rhs = random_matrix(&mut rng, 12, 7);
            let x = m.solve(&rhs).unwrap();
            let residual = m.matmul(&x).unwrap().sub(&rhs).unwrap().fro_norm();
            assert!(residual <= 1e-10 * rhs.fro_norm());
        }
    }

    #[test]
    fn cayley_style_solve_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 5, 16] {
            let a = random_skew(&mut rng, n);
            let i_plus = Matrix::identity(n).add(&a).unwrap();
            let i_minus = Matrix::identity(n).sub(&a).unwrap();
            let w = i_plus.solve(&i_minus).unwrap();
            let gram = w.matmul_tn(&w).unwrap();
            let dev = gram.sub(&Matrix::identity(n)).unwrap().fro_norm();
            assert!(dev < 1e-12, "n={n} deviation {dev}");
        }
    }

    #[test]
    fn solve_singular_reports_error() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(
            m.solve(&Matrix::identity(2)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn solve_transposed_matches_transpose_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_matrix(&mut rng, 9, 9)
            .add(&Matrix::identity(9).scale(2.0))
            .unwrap();
        let rhs = random_matrix(&mut rng, 9, 4);
        let via_factors = m.lu().unwrap().solve_transposed(&rhs).unwrap();
        let via_transpose = m.transpose().solve(&rhs).unwrap();
        let rel = via_factors.sub(&via_transpose).unwrap().fro_norm() / via_transpose.fro_norm();
        assert!(rel < 1e-12);
    }

    #[test]
    fn transpose_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_matrix(&mut rng, 4, 7);
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn fro_norm_basics() {
        assert_eq!(Matrix::<f64>::zeros(3, 4).fro_norm(), 0.0);
        for n in [1usize, 4, 9] {
            let id = Matrix::<f64>::identity(n);
            assert!((id.fro_norm() - (n as f64).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn elementwise_shape_mismatch_errors() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(3, 2);
        assert!(a.add(&b).is_err());
        assert!(a.sub(&b).is_err());
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        let r = Matrix::from_vec(1, 2, vec![1.0, f64::NAN]);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
        let r = Matrix::from_vec(1, 2, vec![1.0]);
        assert!(matches!(r, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn kernels_are_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_matrix(&mut rng, 17, 13);
        let b = random_matrix(&mut rng, 13, 11);
        let p1 = a.matmul(&b).unwrap();
        let p2 = a.matmul(&b).unwrap();
        for (x, y) in p1.iter().zip(p2.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn single_precision_instantiation_works() {
        let a = Matrix::<f32>::from_vec(2, 2, vec![0.0, 1.0, -1.0, 0.0]).unwrap();
        let p = a.matmul(&a).unwrap();
        assert_eq!(p[(0, 0)], -1.0f32);
        let x = Matrix::<f32>::identity(2)
            .add(&a)
            .unwrap()
            .solve(&Matrix::<f32>::identity(2).sub(&a).unwrap())
            .unwrap();
        let dev = x
            .matmul_tn(&x)
            .unwrap()
            .sub(&Matrix::<f32>::identity(2))
            .unwrap()
            .fro_norm();
        assert!(dev < 1e-5);
    }
}
