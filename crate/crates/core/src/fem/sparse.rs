use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::scalar::Real;

/// Compressed-row sparsity layout, shared between matrices assembled on one mesh.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Pattern {
    /// Pattern of P1 couplings on `mesh` (node i couples to j iff they share a triangle).
    pub fn from_mesh<T: Real>(mesh: &Mesh<T>) -> Self {
        let adj = mesh.node_neighbours();
        let mut row_ptr = Vec::with_capacity(adj.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for (i, nb) in adj.iter().enumerate() {
            let mut row: Vec<usize> = nb.clone();
            row.push(i);
            row.sort_unstable();
            col_idx.extend(row);
            row_ptr.push(col_idx.len());
        }
        Self {
            n: adj.len(),
            row_ptr,
            col_idx,
        }
    }

    fn dense(n: usize) -> Self {
        let row_ptr = (0..=n).map(|i| i * n).collect();
        let col_idx = (0..n * n).map(|k| k % n).collect();
        Self { n, row_ptr, col_idx }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Storage slot of entry `(i, j)`, if structurally present.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn col(&self, slot: usize) -> usize {
        self.col_idx[slot]
    }
}

/// Square sparse matrix in compressed-row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pattern: Arc<Pattern>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![T::zero(); pattern.nnz()];
        Self { pattern, values }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("dense matrix is not square".into()));
        }
        Ok(Self {
            pattern: Arc::new(Pattern::dense(n)),
            values: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn identity(pattern: Arc<Pattern>) -> Self {
        let mut m = Self::zeros(pattern);
        m.add_diagonal(T::one());
        m
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern.slot(i, j).map_or_else(T::zero, |s| self.values[s])
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
    }

    pub fn add_diagonal(&mut self, shift: T) {
        for i in 0..self.dim() {
            let s = self.pattern.slot(i, i).expect("diagonal present");
            self.values[s] += shift;
        }
    }

    /// `self += scale * other`; both must share one pattern.
    pub fn add_scaled(&mut self, scale: T, other: &CsrMatrix<T>) {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern,
            "pattern mismatch"
        );
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, c: T) {
        for a in &mut self.values {
            *a *= c;
        }
    }

    /// Replaces row and column `i` by the identity row.
    pub fn pin(&mut self, i: usize) {
        for s in self.pattern.row(i) {
            let j = self.pattern.col(s);
            self.values[s] = if j == i { T::one() } else { T::zero() };
            if j != i {
                let t = self.pattern.slot(j, i).expect("symmetric pattern");
                self.values[t] = T::zero();
            }
        }
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        let Pattern { n, row_ptr, col_idx } = &*self.pattern;
        assert!(x.len() == *n && y.len() == *n, "matvec dimension mismatch");
        for (yi, w) in y.iter_mut().zip(row_ptr.windows(2)) {
            let (lo, hi) = (w[0], w[1]);
            *yi = self.values[lo..hi]
                .iter()
                .zip(&col_idx[lo..hi])
                // SAFETY: patterns are built from mesh adjacency, so every column is < n == x.len().
                .fold(T::zero(), |acc, (&a, &j)| acc + a * unsafe { *x.get_unchecked(j) });
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim()];
        self.matvec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        crate::scalar::dot(x, &self.matvec(y))
    }

    /// Largest |a_ij − a_ji| relative to the largest |a_ij|.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        let mut scale = T::zero();
        for i in 0..self.dim() {
            for s in self.pattern.row(i) {
                let j = self.pattern.col(s);
                scale = scale.max(self.values[s].abs());
                worst = worst.max((self.values[s] - self.get(j, i)).abs());
            }
        }
        if scale > T::zero() {
            worst / scale
        } else {
            T::zero()
        }
    }

    /// Matrix Market coordinate text (general, 1-based).
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::new();
        writeln!(out, "%%MatrixMarket matrix coordinate real general").unwrap();
        writeln!(out, "{} {} {}", self.dim(), self.dim(), self.pattern.nnz()).unwrap();
        for i in 0..self.dim() {
            for s in self.pattern.row(i) {
                writeln!(out, "{} {} {:e}", i + 1, self.pattern.col(s) + 1, self.values[s]).unwrap();
            }
        }
        out
    }
}
