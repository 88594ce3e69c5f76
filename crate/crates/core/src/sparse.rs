//! Symmetric sparse storage and a reusable sparse Cholesky factorization.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix stored as its lower triangle (diagonal included) in
/// compressed-column form with sorted row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymCsc {
    n: usize,
    col_ptr: Vec<u32>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SymCsc {
    /// Builds an all-zero matrix from per-column row lists (rows >= column).
    pub fn from_columns(n: usize, columns: Vec<Vec<u32>>) -> Self {
        assert_eq!(columns.len(), n);
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0u32);
        let total: usize = columns.iter().map(Vec::len).sum();
        assert!(total < u32::MAX as usize, "matrix too large for 32-bit indices");
        let mut row_idx = Vec::with_capacity(total);
        for (j, mut col) in columns.into_iter().enumerate() {
            col.sort_unstable();
            col.dedup();
            debug_assert!(col.first().is_none_or(|&r| r as usize >= j));
            row_idx.extend_from_slice(&col);
            col_ptr.push(row_idx.len() as u32);
        }
        let nnz = row_idx.len();
        Self {
            n,
            col_ptr,
            row_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Sums `(row, col, value)` entries; each off-diagonal pair is given once
    /// (either triangle).
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut columns = vec![Vec::new(); n];
        for &(i, j, _) in entries {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            columns[c].push(r as u32);
        }
        let mut m = Self::from_columns(n, columns);
        for &(i, j, v) in entries {
            m.add(i, j, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_pattern(&self, other: &SymCsc) -> bool {
        self.n == other.n && self.col_ptr == other.col_ptr && self.row_idx == other.row_idx
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }

    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        let lo = self.col_ptr[c] as usize;
        let hi = self.col_ptr[c + 1] as usize;
        self.row_idx[lo..hi]
            .binary_search(&(r as u32))
            .ok()
            .map(|k| lo + k)
    }

    /// Adds to entry (row, col); the mirrored entry is implied.
    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        let k = self
            .position(row, col)
            .unwrap_or_else(|| panic!("entry ({row}, {col}) outside the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.position(row, col).map_or(0.0, |k| self.values[k])
    }

    /// Adds a dense symmetric block with the given global indices. Only the
    /// pairs with `global[a] >= global[b]` are read.
    pub fn add_block(&mut self, global: &[u32], block: &DMatrix<f64>) {
        for (b, &gc) in global.iter().enumerate() {
            let c = gc as usize;
            let lo = self.col_ptr[c] as usize;
            let hi = self.col_ptr[c + 1] as usize;
            let rows = &self.row_idx[lo..hi];
            for (a, &gr) in global.iter().enumerate() {
                if gr < gc {
                    continue;
                }
                let k = lo + rows
                    .binary_search(&gr)
                    .unwrap_or_else(|_| panic!("entry ({gr}, {gc}) outside the sparsity pattern"));
                self.values[k] += block[(a, b)];
            }
        }
    }

    /// `self += factor * other` for matrices with identical patterns.
    pub fn add_scaled(&mut self, factor: f64, other: &SymCsc) {
        assert!(self.same_pattern(other), "patterns differ");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                let lo = self.col_ptr[j] as usize;
                if lo < self.col_ptr[j + 1] as usize && self.row_idx[lo] as usize == j {
                    self.values[lo]
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let lo = self.col_ptr[j] as usize;
            let hi = self.col_ptr[j + 1] as usize;
            let xj = x[j];
            let mut acc = 0.0;
            for k in lo..hi {
                let i = self.row_idx[k] as usize;
                let v = self.values[k];
                y[i] += v * xj;
                if i != j {
                    acc += v * x[i];
                }
            }
            y[j] += acc;
        }
        y
    }

    /// r = b - A x accumulated in compensated (double-double) arithmetic, so
    /// the residual stays meaningful for badly scaled systems.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        assert_eq!(b.len(), self.n);
        let mut hi = b.to_vec();
        let mut lo = vec![0.0; self.n];
        let mut acc = |i: usize, a: f64, xv: f64| {
            let p = -a * xv;
            let pe = (-a).mul_add(xv, -p);
            let (s, se) = two_sum(hi[i], p);
            hi[i] = s;
            lo[i] += se + pe;
        };
        for j in 0..self.n {
            for k in self.col_ptr[j] as usize..self.col_ptr[j + 1] as usize {
                let i = self.row_idx[k] as usize;
                let v = self.values[k];
                acc(i, v, x[j]);
                if i != j {
                    acc(j, v, x[i]);
                }
            }
        }
        hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
    }

    /// Y = A X for a dense block of vectors.
    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let col: Vec<f64> = x.column(c).iter().copied().collect();
            let out = self.mul_vec(&col);
            y.column_mut(c).copy_from_slice(&out);
        }
        y
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for k in self.col_ptr[j] as usize..self.col_ptr[j + 1] as usize {
                let i = self.row_idx[k] as usize;
                d[(i, j)] = self.values[k];
                d[(j, i)] = self.values[k];
            }
        }
        d
    }

    fn faer_ref(&self) -> SparseColMatRef<'_, u32, f64> {
        let symbolic = SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx);
        SparseColMatRef::new(symbolic, &self.values)
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sparse LLᵀ factorization of a symmetric positive definite matrix. The
/// factor is computed once and serves any number of right-hand sides; each
/// solve applies iterative refinement against the original matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    matrix: Arc<SymCsc>,
    llt: Llt<u32, f64>,
}

/// Relative residual after which refinement stops.
const REFINE_STEPS: usize = 2;

impl Cholesky {
    pub fn factorize(matrix: Arc<SymCsc>) -> Result<Self> {
        let a = matrix.faer_ref();
        let symbolic = SymbolicLlt::try_new(a.symbolic(), Side::Lower)
            .map_err(|e| Error::Factorization(format!("symbolic analysis failed: {e:?}")))?;
        match Llt::try_new_with_symbolic(symbolic, a, Side::Lower) {
            Ok(llt) => Ok(Self { matrix, llt }),
            Err(e) => {
                let diagnostic = zero_mode_diagnostic(&matrix);
                match diagnostic {
                    Some(zero_modes) => Err(Error::Singular {
                        zero_modes,
                        detail: format!("Cholesky breakdown ({e:?})"),
                    }),
                    None => Err(Error::Factorization(format!(
                        "matrix of size {} is not numerically positive definite ({e:?})",
                        matrix.dim()
                    ))),
                }
            }
        }
    }

    pub fn matrix(&self) -> &SymCsc {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = DMatrix::from_column_slice(b.len(), 1, b);
        self.solve_many(&rhs).column(0).iter().copied().collect()
    }

    /// Solves A X = B for all columns of B with the stored factor, followed by
    /// a fixed number of iterative refinement steps so that every column is
    /// processed identically regardless of how right-hand sides are batched.
    pub fn solve_many(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.dim());
        let mut x = b.clone();
        self.apply_factor(&mut x);
        for _ in 0..REFINE_STEPS {
            let mut residual = DMatrix::zeros(b.nrows(), b.ncols());
            for c in 0..b.ncols() {
                let xc: Vec<f64> = x.column(c).iter().copied().collect();
                let bc: Vec<f64> = b.column(c).iter().copied().collect();
                residual.column_mut(c).copy_from_slice(&self.matrix.residual(&xc, &bc));
            }
            self.apply_factor(&mut residual);
            x += residual;
        }
        x
    }

    /// Relative residual ‖Ax − b‖ / ‖b‖ (absolute when b = 0).
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let r = self.matrix.residual(x, b);
        let bn = norm(b);
        if bn > 0.0 {
            norm(&r) / bn
        } else {
            norm(&r)
        }
    }

    fn apply_factor(&self, x: &mut DMatrix<f64>) {
        let (nrows, ncols) = x.shape();
        let data = x.as_mut_slice();
        let view = MatMut::from_column_major_slice_mut(data, nrows, ncols);
        self.llt.solve_in_place(view);
    }
}

/// Counts near-zero eigenvalues of a small singular matrix; `None` when the
/// matrix is too large for a dense eigendecomposition.
fn zero_mode_diagnostic(a: &SymCsc) -> Option<usize> {
    if a.dim() > 3000 {
        return None;
    }
    let eig = a.to_dense().symmetric_eigen().eigenvalues;
    let max = eig.abs().max();
    if max == 0.0 {
        return Some(a.dim());
    }
    Some(eig.iter().filter(|&&v| v <= 1e-10 * max).count().max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymCsc {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i + 1, i, -1.0));
            }
        }
        SymCsc::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_and_mirror() {
        let m = SymCsc::from_triplets(3, &[(0, 1, 1.0), (1, 0, 2.0), (2, 2, 5.0), (2, 2, 1.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(2, 2), 6.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0, 6.0]);
    }

    #[test]
    fn factor_and_solve_many() {
        let a = Arc::new(laplacian(50));
        let chol = Cholesky::factorize(a.clone()).unwrap();
        let mut b = DMatrix::zeros(50, 3);
        for i in 0..50 {
            b[(i, 0)] = 1.0;
            b[(i, 1)] = i as f64;
            b[(i, 2)] = 0.0;
        }
        let x = chol.solve_many(&b);
        for c in 0..3 {
            let xc: Vec<f64> = x.column(c).iter().copied().collect();
            let bc: Vec<f64> = b.column(c).iter().copied().collect();
            assert!(chol.relative_residual(&xc, &bc) < 1e-12);
        }
        assert!(x.column(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_matrix_reports_modes() {
        // free-free chain: one rigid mode
        let mut t = Vec::new();
        for i in 0..9 {
            t.push((i, i, 1.0));
            t.push((i + 1, i + 1, 1.0));
            t.push((i + 1, i, -1.0));
        }
        let a = Arc::new(SymCsc::from_triplets(10, &t));
        match Cholesky::factorize(a) {
            Err(Error::Singular { zero_modes, .. }) => assert_eq!(zero_modes, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
