//! Compressed-row sparse matrices and the SPD direct solver used for
//! preconditioner blocks and flux subproblems.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::CscMatrix;

use crate::error::{Error, Result};

/// Sparse matrix in compressed-row layout.
///
/// Despite the name it also stores rectangular operators such as the
/// gradient incidence; `symmetric` records whether the matrix was assembled
/// as a symmetric operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    pub nrows: usize,
    pub ncols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
    pub symmetric: bool,
}

/// Collects `(row, col, value)` contributions and sums duplicates in
/// insertion order, so the result does not depend on anything but the push
/// sequence.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self, symmetric: bool) -> SparseSym {
        // stable sort keeps the per-entry accumulation order fixed
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; self.nrows + 1];
        let mut col_indices = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            row_offsets[r + 1] += row_offsets[r];
        }
        let m = SparseSym { nrows: self.nrows, ncols: self.ncols, row_offsets, col_indices, values, symmetric };
        m.drop_zeros()
    }
}

impl SparseSym {
    pub fn dim(&self) -> usize {
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn identity(n: usize) -> Self {
        SparseSym {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[range.clone()].binary_search(&c) {
            Ok(i) => self.values[range.start + i],
            Err(_) => 0.0,
        }
    }

    /// Removes entries that are zero relative to the largest magnitude
    /// (cancellation noise in curl-curl rows).
    fn drop_zeros(self) -> Self {
        let max = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-15 * max;
        let mut row_offsets = vec![0usize; self.nrows + 1];
        let mut col_indices = Vec::with_capacity(self.col_indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                if v.abs() > tol {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets[r + 1] = values.len();
        }
        SparseSym { row_offsets, col_indices, values, ..self }
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y += alpha * A x`
    pub fn mul_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let s: f64 = self.row(r).map(|(c, v)| v * x[c]).sum();
            *yr += alpha * s;
        }
    }

    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.nrows).map(|r| x[r] * self.row(r).map(|(c, v)| v * y[c]).sum::<f64>()).sum()
    }

    pub fn transpose(&self) -> SparseSym {
        let mut b = TripletBuilder::new(self.ncols, self.nrows);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                b.push(c, r, v);
            }
        }
        b.build(self.symmetric)
    }

    /// `a * self + b * other` with merged sparsity pattern.
    pub fn linear_combination(&self, a: f64, other: &SparseSym, b: f64) -> SparseSym {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = TripletBuilder::new(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                t.push(r, c, a * v);
            }
            for (c, v) in other.row(r) {
                t.push(r, c, b * v);
            }
        }
        t.build(self.symmetric && other.symmetric)
    }

    pub fn scaled(&self, s: f64) -> SparseSym {
        SparseSym { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    /// `G^T A G` for a rectangular `g`.
    pub fn galerkin(&self, g: &SparseSym) -> SparseSym {
        assert_eq!(g.nrows, self.ncols);
        let gt = g.transpose();
        let mut t = TripletBuilder::new(g.ncols, g.ncols);
        // (A G) column by row of G^T: accumulate row-wise
        for i in 0..g.ncols {
            // row i of G^T A G = sum_e G[e,i] * (A G)[e,:]
            let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
            for (e, gei) in gt.row(i) {
                for (f, aef) in self.row(e) {
                    for (j, gfj) in g.row(f) {
                        *acc.entry(j).or_insert(0.0) += gei * aef * gfj;
                    }
                }
            }
            for (j, v) in acc {
                t.push(i, j, v);
            }
        }
        t.build(true)
    }

    /// Largest entrywise asymmetry `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// Coordinate text format, one `row col value` triple per line.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "% {} {} {}", self.nrows, self.ncols, self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let _ = writeln!(s, "{} {} {:.17e}", r, c, v);
            }
        }
        s
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SpdSolver {
    chol: CscCholesky<f64>,
    n: usize,
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdSolver").field("n", &self.n).finish()
    }
}

impl SpdSolver {
    pub fn factor(a: &SparseSym) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch { expected: a.nrows, found: a.ncols });
        }
        // CSR of a symmetric matrix is its own CSC
        let csc = CscMatrix::try_from_csc_data(
            a.nrows,
            a.ncols,
            a.row_offsets.clone(),
            a.col_indices.clone(),
            a.values.clone(),
        )
        .map_err(|e| Error::Factorization(e.to_string()))?;
        let chol = CscCholesky::factor(&csc).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(SpdSolver { chol, n: a.nrows })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = DVector::from_column_slice(b);
        self.chol.solve_mut(&mut x);
        x.as_slice().to_vec()
    }

    pub fn solve_into(&self, b: &[f64], out: &mut [f64]) {
        out.copy_from_slice(b);
        let mut view = nalgebra::DVectorViewMut::from_slice(out, self.n);
        self.chol.solve_mut(&mut view);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
