//! Dense linear algebra kernel: row-major `f64` matrices and vectors, the
//! column-stacking `vec` operator, Kronecker products, partial-pivot solves,
//! and a Cholesky-based symmetric inverse with ridge fallback.
//!
//! Everything here is sized for desk-scale systems (tens of rows). There is
//! no sparsity and no BLAS; all types are immutable after construction and
//! safe to share across threads.

use std::fmt;
use std::ops::{Index, IndexMut};

/// Pivot magnitudes below `SINGULAR_TOL * max|M_ij|` abort the factorization.
const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LinAlgError {
    /// A pivot fell below the singularity threshold during elimination.
    SingularMatrix,
    /// Cholesky failed: the matrix is not positive definite.
    NotPositiveDefinite,
    /// An operation requiring symmetry was handed an asymmetric matrix.
    NotSymmetric { max_asym: f64 },
}

impl fmt::Display for LinAlgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinAlgError::SingularMatrix => write!(f, "matrix is singular"),
            LinAlgError::NotPositiveDefinite => write!(f, "matrix is not positive definite"),
            LinAlgError::NotSymmetric { max_asym } => {
                write!(f, "matrix is not symmetric (max asymmetry {max_asym:.3e})")
            }
        }
    }
}

impl std::error::Error for LinAlgError {}

/// Dense vector of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl DenseVector {
    pub fn new(data: Vec<f64>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self { data: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, factor: f64) -> DenseVector {
        DenseVector::new(self.data.iter().map(|x| x * factor).collect())
    }

    pub fn add(&self, other: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), other.len(), "add: length mismatch");
        DenseVector::new(self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), other.len(), "sub: length mismatch");
        DenseVector::new(self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect())
    }
}

impl From<&[f64]> for DenseVector {
    fn from(s: &[f64]) -> Self {
        Self { data: s.to_vec() }
    }
}

impl<const N: usize> From<[f64; N]> for DenseVector {
    fn from(s: [f64; N]) -> Self {
        Self { data: s.to_vec() }
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Dense row-major matrix of 64-bit floats with `rows, cols >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "from_rows: no rows");
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "from_rows: ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, v: &DenseVector) -> DenseVector {
        assert_eq!(v.len(), self.cols, "matvec: dimension mismatch");
        let mut out = DenseVector::zeros(self.rows);
        for i in 0..self.rows {
            out[i] = self.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// `M' v` without forming the transpose.
    pub fn tr_matvec(&self, v: &DenseVector) -> DenseVector {
        assert_eq!(v.len(), self.rows, "tr_matvec: dimension mismatch");
        let mut out = DenseVector::zeros(self.cols);
        for i in 0..self.rows {
            let vi = v[i];
            for j in 0..self.cols {
                out[j] += self[(i, j)] * vi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "matmul: dimension mismatch");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(l, j)];
                }
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> DenseMatrix {
        DenseMatrix::new(self.rows, self.cols, self.data.iter().map(|x| x * factor).collect())
    }

    pub fn add(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        DenseMatrix::new(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        )
    }

    pub fn trace(&self) -> f64 {
        assert_eq!(self.rows, self.cols, "trace: matrix must be square");
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut m = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m
    }

    /// Average out floating-point asymmetry: `(M + M') / 2`.
    pub fn symmetrized(&self) -> DenseMatrix {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// `v' M v` for square `M`.
    pub fn quad_form(&self, v: &DenseVector) -> f64 {
        self.matvec(v).dot(v)
    }

    /// Column-stacking operator: element `(i, j)` lands at position
    /// `j*rows + i` of the result.
    pub fn vec(&self) -> DenseVector {
        let mut out = DenseVector::zeros(self.rows * self.cols);
        for j in 0..self.cols {
            for i in 0..self.rows {
                out[j * self.rows + i] = self[(i, j)];
            }
        }
        out
    }

    /// Inverse of [`DenseMatrix::vec`] for a target shape.
    pub fn unvec(v: &DenseVector, rows: usize, cols: usize) -> DenseMatrix {
        assert_eq!(v.len(), rows * cols, "unvec: length mismatch");
        let mut out = DenseMatrix::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                out[(i, j)] = v[j * rows + i];
            }
        }
        out
    }

    /// Kronecker product: block `(i, j)` of the result equals `self[(i,j)] * other`.
    pub fn kron(&self, other: &DenseMatrix) -> DenseMatrix {
        let (rw, cw) = (self.rows, self.cols);
        let (rx, cx) = (other.rows, other.cols);
        let mut out = DenseMatrix::zeros(rw * rx, cw * cx);
        for i in 0..rw {
            for j in 0..cw {
                let w = self[(i, j)];
                if w == 0.0 {
                    continue;
                }
                for r in 0..rx {
                    for s in 0..cx {
                        out[(i * rx + r, j * cx + s)] = w * other[(r, s)];
                    }
                }
            }
        }
        out
    }

    /// Solve `M x = y` by partial-pivot Gaussian elimination.
    pub fn solve(&self, y: &DenseVector) -> Result<DenseVector, LinAlgError> {
        assert_eq!(self.rows, self.cols, "solve: matrix must be square");
        assert_eq!(y.len(), self.rows, "solve: rhs length mismatch");
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = y.as_slice().to_vec();
        let threshold = SINGULAR_TOL * self.max_abs();

        for col in 0..n {
            // Partial pivoting on the current column.
            let mut pivot_row = col;
            let mut pivot_val = a[col * n + col].abs();
            for r in (col + 1)..n {
                let v = a[r * n + col].abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val <= threshold {
                return Err(LinAlgError::SingularMatrix);
            }
            if pivot_row != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot_row * n + j);
                }
                x.swap(col, pivot_row);
            }
            let pivot = a[col * n + col];
            for r in (col + 1)..n {
                let factor = a[r * n + col] / pivot;
                if factor == 0.0 {
                    continue;
                }
                a[r * n + col] = 0.0;
                for j in (col + 1)..n {
                    a[r * n + j] -= factor * a[col * n + j];
                }
                x[r] -= factor * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut s = x[col];
            for j in (col + 1)..n {
                s -= a[col * n + j] * x[j];
            }
            x[col] = s / a[col * n + col];
        }
        Ok(DenseVector::new(x))
    }

    /// Lower Cholesky factor `L` with `L L' = M`. Fails on non-PD input.
    pub fn cholesky(&self) -> Result<DenseMatrix, LinAlgError> {
        assert_eq!(self.rows, self.cols, "cholesky: matrix must be square");
        let n = self.rows;
        let mut l = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = self[(i, j)];
                for t in 0..j {
                    s -= l[(i, t)] * l[(j, t)];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(LinAlgError::NotPositiveDefinite);
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        Ok(l)
    }

    /// Inverse of the symmetric matrix `M + ridge * I` via Cholesky.
    ///
    /// Callers pass `ridge = 0` first and retry with
    /// `1e-10 * trace(M) / dim` when the unridged factorization fails; the
    /// retry protocol lives with the caller so this stays a pure primitive.
    pub fn sym_pinv(&self, ridge: f64) -> Result<DenseMatrix, LinAlgError> {
        assert_eq!(self.rows, self.cols, "sym_pinv: matrix must be square");
        let max_asym = self.max_asymmetry();
        if max_asym > 1e-8 * (1.0 + self.max_abs()) {
            return Err(LinAlgError::NotSymmetric { max_asym });
        }
        let n = self.rows;
        let mut b = self.symmetrized();
        for i in 0..n {
            b[(i, i)] += ridge;
        }
        let l = b.cholesky()?;
        // Invert by solving L L' X = I one column at a time.
        let mut inv = DenseMatrix::zeros(n, n);
        for col in 0..n {
            let mut x = vec![0.0; n];
            x[col] = 1.0;
            for i in 0..n {
                let mut s = x[i];
                for t in 0..i {
                    s -= l[(i, t)] * x[t];
                }
                x[i] = s / l[(i, i)];
            }
            for i in (0..n).rev() {
                let mut s = x[i];
                for t in (i + 1)..n {
                    s -= l[(t, i)] * x[t];
                }
                x[i] = s / l[(i, i)];
            }
            for i in 0..n {
                inv[(i, col)] = x[i];
            }
        }
        Ok(inv.symmetrized())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Rng;

    fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
        let data = (0..rows * cols).map(|_| rng.uniform_range(-scale, scale)).collect();
        DenseMatrix::new(rows, cols, data)
    }

    #[test]
    fn vec_column_stacks() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 3.0], vec![2.0, 4.0]]);
        assert_eq!(m.vec().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn vec_of_column_vector_is_identity() {
        let m = DenseMatrix::new(3, 1, vec![7.0, -1.0, 2.5]);
        assert_eq!(m.vec().as_slice(), &[7.0, -1.0, 2.5]);
    }

    #[test]
    fn vec_of_zero_matrix() {
        let m = DenseMatrix::zeros(2, 3);
        assert_eq!(m.vec().as_slice(), &[0.0; 6]);
    }

    #[test]
    fn unvec_inverts_vec() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 3.0, 5.0], vec![2.0, 4.0, 6.0]]);
        assert_eq!(DenseMatrix::unvec(&m.vec(), 2, 3), m);
    }

    #[test]
    fn kron_with_scalar_one_is_identity() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let one = DenseMatrix::new(1, 1, vec![1.0]);
        assert_eq!(one.kron(&x), x);
    }

    #[test]
    fn kron_row_vector_with_identity() {
        let w = DenseMatrix::new(1, 2, vec![2.0, 3.0]);
        let k = w.kron(&DenseMatrix::identity(2));
        let expected =
            DenseMatrix::from_rows(&[vec![2.0, 0.0, 3.0, 0.0], vec![0.0, 2.0, 0.0, 3.0]]);
        assert_eq!(k, expected);
    }

    #[test]
    fn kron_identity_with_row_vector() {
        let w = DenseMatrix::new(1, 2, vec![1.0, 1.0]);
        let k = DenseMatrix::identity(2).kron(&w);
        let expected =
            DenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]]);
        assert_eq!(k, expected);
    }

    #[test]
    fn kron_vec_identity_on_random_triples() {
        // kron(A, B) * vec(X) == vec(B X A') for conformable shapes.
        let mut rng = Rng::new(20240701);
        for _ in 0..100 {
            let (p, q, r, s) = (
                1 + (rng.next_u64() % 3) as usize,
                1 + (rng.next_u64() % 3) as usize,
                1 + (rng.next_u64() % 3) as usize,
                1 + (rng.next_u64() % 3) as usize,
            );
            let a = random_matrix(&mut rng, p, q, 2.0);
            let b = random_matrix(&mut rng, r, s, 2.0);
            let x = random_matrix(&mut rng, s, q, 2.0);
            let lhs = a.kron(&b).matvec(&x.vec());
            let rhs = b.matmul(&x).matmul(&a.transpose()).vec();
            let diff = lhs.sub(&rhs).norm_inf();
            assert!(diff <= 1e-10, "kron/vec identity violated by {diff:e}");
        }
    }

    #[test]
    fn solve_identity() {
        let y = DenseVector::from([1.0, 2.0, 3.0]);
        let x = DenseMatrix::identity(3).solve(&y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn solve_two_by_two() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, -1.0]]);
        let x = m.solve(&DenseVector::from([4.0, 1.0])).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solve_singular_matrix_errors() {
        let m = DenseMatrix::zeros(2, 2);
        let err = m.solve(&DenseVector::from([1.0, 1.0])).unwrap_err();
        assert_eq!(err, LinAlgError::SingularMatrix);
    }

    #[test]
    fn solve_recovers_rhs_on_well_conditioned_systems() {
        let mut rng = Rng::new(99);
        for _ in 0..100 {
            let n = 2 + (rng.next_u64() % 5) as usize;
            let mut m = random_matrix(&mut rng, n, n, 1.0);
            for i in 0..n {
                m[(i, i)] += n as f64; // diagonal dominance
            }
            let y = DenseVector::new((0..n).map(|_| rng.uniform_range(-3.0, 3.0)).collect());
            let x = m.solve(&y).unwrap();
            let resid = m.matvec(&x).sub(&y).norm_inf();
            assert!(resid <= 1e-9 * (1.0 + y.norm_inf()), "residual {resid:e}");
        }
    }

    #[test]
    fn sym_pinv_identity() {
        let inv = DenseMatrix::identity(2).sym_pinv(0.0).unwrap();
        assert_eq!(inv, DenseMatrix::identity(2));
    }

    #[test]
    fn sym_pinv_diagonal() {
        let inv = DenseMatrix::from_diag(&[4.0, 9.0]).sym_pinv(0.0).unwrap();
        assert!((inv[(0, 0)] - 0.25).abs() < 1e-14);
        assert!((inv[(1, 1)] - 1.0 / 9.0).abs() < 1e-14);
        assert_eq!(inv[(0, 1)], 0.0);
    }

    #[test]
    fn sym_pinv_zero_matrix_errors() {
        let err = DenseMatrix::zeros(2, 2).sym_pinv(0.0).unwrap_err();
        assert_eq!(err, LinAlgError::NotPositiveDefinite);
    }

    #[test]
    fn sym_pinv_rejects_asymmetric_input() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]);
        assert!(matches!(m.sym_pinv(0.0), Err(LinAlgError::NotSymmetric { .. })));
    }

    #[test]
    fn sym_pinv_ridge_rescues_singular_psd() {
        // Rank-one PSD matrix: fails at ridge 0, succeeds with the retry rule.
        let m = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(m.sym_pinv(0.0).is_err());
        let ridge = 1e-10 * m.trace() / 2.0;
        let inv = m.sym_pinv(ridge).unwrap();
        assert!(inv.max_abs().is_finite());
    }
}
