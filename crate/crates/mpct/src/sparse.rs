//! Minimal compressed-sparse-row matrix.
//!
//! The solver only needs assembly from triplets, matrix-vector products,
//! row iteration and densification, so we keep a small purpose-built type
//! instead of pulling in a full sparse-algebra dependency.

use crate::scalar::Scalar;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![T::one(); n],
        }
    }

    /// Builds from (row, col, value) triplets. Duplicate entries are summed,
    /// exact zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, T)> = Vec::with_capacity(sorted.len());
        for (i, j, v) in sorted {
            assert!(i < nrows && j < ncols, "triplet out of bounds");
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(merged.len());
        let mut data = Vec::with_capacity(merged.len());
        for (i, j, v) in merged {
            if v != T::zero() {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_dense(m: &DMatrix<T>) -> Self {
        let mut trips = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != T::zero() {
                    trips.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trips)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn matvec(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.ncols);
        let mut y = DVector::zeros(self.nrows);
        for i in 0..self.nrows {
            let mut acc = T::zero();
            for (j, v) in self.row(i) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn matvec_transpose(&self, y: &DVector<T>) -> DVector<T> {
        assert_eq!(y.len(), self.nrows);
        let mut x = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                x[j] += v * y[i];
            }
        }
        x
    }

    /// Dense row of the matrix (handy for single-row maps).
    pub fn dense_row(&self, i: usize) -> DVector<T> {
        let mut r = DVector::zeros(self.ncols);
        for (j, v) in self.row(i) {
            r[j] += v;
        }
        r
    }

    /// Stacks matrices vertically; all must share the column count.
    pub fn vstack(parts: &[&SparseMatrix<T>]) -> Self {
        assert!(!parts.is_empty());
        let ncols = parts[0].ncols;
        let mut trips = Vec::new();
        let mut row0 = 0usize;
        for p in parts {
            assert_eq!(p.ncols, ncols, "vstack column mismatch");
            for (i, j, v) in p.iter() {
                trips.push((row0 + i, j, v));
            }
            row0 += p.nrows;
        }
        Self::from_triplets(row0, ncols, &trips)
    }

    /// Returns CSC arrays (colptr, rowind, values) of the matrix.
    pub fn to_csc(&self) -> (Vec<usize>, Vec<usize>, Vec<T>) {
        let mut colptr = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            colptr[j + 1] += 1;
        }
        for j in 0..self.ncols {
            colptr[j + 1] += colptr[j];
        }
        let mut rowind = vec![0usize; self.nnz()];
        let mut vals = vec![T::zero(); self.nnz()];
        let mut next = colptr.clone();
        for (i, j, v) in self.iter() {
            let k = next[j];
            rowind[k] = i;
            vals[k] = v;
            next[j] += 1;
        }
        (colptr, rowind, vals)
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn infinity_norm(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.nrows {
            let mut acc = T::zero();
            for (_, v) in self.row(i) {
                acc += v.abs();
            }
            if acc > best {
                best = acc;
            }
        }
        best
    }
}
