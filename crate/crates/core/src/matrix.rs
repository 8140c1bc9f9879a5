//! Matrix containers shared by every stage of the pipeline.
//!
//! * [`BowMatrix`]: images x features histogram (visual BOW, textual BOW,
//!   refined model, reduced model).
//! * [`AffinityMatrix`]: dense symmetric nonnegative images x images similarity.
//! * [`SparseAffinity`]: the same thing stored as CSR, used for graph weights
//!   whose rows hold at most a handful of neighbors.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Absolute symmetry tolerance for dense affinities.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Nonnegative images x features count/frequency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BowMatrix {
    values: Array2<f64>,
    feature_ids: Option<Vec<String>>,
}

impl BowMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!("empty BOW matrix {rows}x{cols}")));
        }
        if let Some(((i, j), v)) = values
            .indexed_iter()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidMatrix(format!(
                "BOW entry ({i}, {j}) = {v} is negative or not finite"
            )));
        }
        Ok(BowMatrix { values, feature_ids: None })
    }

    pub fn with_feature_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.cols() {
            return Err(Error::dims(format!(
                "{} feature ids for {} columns",
                ids.len(),
                self.cols()
            )));
        }
        self.feature_ids = Some(ids);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn feature_ids(&self) -> Option<&[String]> {
        self.feature_ids.as_deref()
    }

    /// Feature ids, falling back to `f0, f1, ...` when none were attached.
    pub fn feature_labels(&self) -> Vec<String> {
        match &self.feature_ids {
            Some(ids) => ids.clone(),
            None => (0..self.cols()).map(|j| format!("f{j}")).collect(),
        }
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.values.sum_axis(ndarray::Axis(1))
    }

    /// Rows restricted to `indices`, in that order. Feature ids carry over.
    pub fn select_rows(&self, indices: &[usize]) -> BowMatrix {
        BowMatrix {
            values: self.values.select(ndarray::Axis(0), indices),
            feature_ids: self.feature_ids.clone(),
        }
    }
}

/// Symmetric nonnegative n x n similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    values: Array2<f64>,
}

impl AffinityMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::InvalidMatrix(format!("affinity must be square, got {r}x{c}")));
        }
        for i in 0..r {
            for j in 0..r {
                let v = values[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidMatrix(format!(
                        "affinity entry ({i}, {j}) = {v} is negative or not finite"
                    )));
                }
                if j > i && (v - values[[j, i]]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidMatrix(format!(
                        "affinity not symmetric at ({i}, {j}): {v} vs {}",
                        values[[j, i]]
                    )));
                }
            }
        }
        Ok(AffinityMatrix { values })
    }

    /// Replaces `values` by `(values + values^T) / 2` before validation.
    pub fn symmetrized(mut values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c {
            return Err(Error::InvalidMatrix(format!("affinity must be square, got {r}x{c}")));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                let m = 0.5 * (values[[i, j]] + values[[j, i]]);
                values[[i, j]] = m;
                values[[j, i]] = m;
            }
        }
        Self::new(values)
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn degrees(&self) -> Array1<f64> {
        self.values.sum_axis(ndarray::Axis(1))
    }
}

/// Symmetric nonnegative sparse matrix in CSR layout with sorted column
/// indices. Holds image-graph weights and the normalized propagation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinity {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseAffinity {
    /// Builds a matrix from coordinate triplets, summing duplicates and
    /// dropping explicit zeros. The triplets must describe a symmetric matrix.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let m = Self::assemble(n, triplets)?;
        for i in 0..n {
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let back = m.get(j, i);
                if (v - back).abs() > SYMMETRY_TOL * v.abs().max(1.0) {
                    return Err(Error::InvalidMatrix(format!(
                        "sparse affinity not symmetric at ({i}, {j}): {v} vs {back}"
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Builds `(W + W^T) / 2` from the (possibly asymmetric) triplets of `W`.
    pub fn symmetrize_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut both = Vec::with_capacity(2 * triplets.len());
        for &(i, j, v) in triplets {
            both.push((i, j, 0.5 * v));
            both.push((j, i, 0.5 * v));
        }
        Self::assemble(n, &both)
    }

    /// Keeps the nonzero entries of a dense affinity.
    pub fn from_dense(a: &AffinityMatrix) -> Self {
        let n = a.size();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = a.get(i, j);
                if v != 0.0 {
                    col_idx.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseAffinity { n, row_ptr, col_idx, vals }
    }

    fn assemble(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::dims(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidMatrix(format!(
                    "sparse affinity entry ({i}, {j}) = {v} is negative or not finite"
                )));
            }
            sorted.push((i, j, v));
        }
        // stable sort keeps duplicate summation order fixed
        sorted.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows_of = Vec::with_capacity(sorted.len());
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                vals.push(v);
                rows_of.push(i);
                last = Some((i, j));
            }
        }
        // drop explicit zeros
        let mut k = 0;
        for idx in 0..vals.len() {
            if vals[idx] != 0.0 {
                col_idx[k] = col_idx[idx];
                vals[k] = vals[idx];
                rows_of[k] = rows_of[idx];
                k += 1;
            }
        }
        col_idx.truncate(k);
        vals.truncate(k);
        rows_of.truncate(k);
        for &i in &rows_of {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseAffinity { n, row_ptr, col_idx, vals })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.vals[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn degrees(&self) -> Array1<f64> {
        Array1::from_iter((0..self.n).map(|i| self.row(i).1.iter().sum::<f64>()))
    }

    /// Row-major `(i, j, w)` triplets of every stored entry.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            out.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
        }
        out
    }

    pub fn to_dense(&self) -> AffinityMatrix {
        let mut d = Array2::zeros((self.n, self.n));
        for (i, j, v) in self.triplets() {
            d[[i, j]] = v;
        }
        AffinityMatrix { values: d }
    }

    /// Scales entry `(i, j)` by `f(i, j)`; the closure must be symmetric.
    pub(crate) fn map_entries(&self, f: impl Fn(usize, usize, f64) -> f64) -> SparseAffinity {
        let mut out = self.clone();
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.vals[p] = f(i, self.col_idx[p], self.vals[p]);
            }
        }
        out
    }

    /// `out = self * x` for a row-major dense `x`.
    pub fn mul_dense(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, x.ncols()));
        self.mul_dense_into(x, &mut out);
        out
    }

    pub(crate) fn mul_dense_into(&self, x: ArrayView2<'_, f64>, out: &mut Array2<f64>) {
        out.fill(0.0);
        for i in 0..self.n {
            let mut out_row = out.row_mut(i);
            let (cols, vals) = self.row(i);
            for (&j, &w) in cols.iter().zip(vals) {
                out_row.scaled_add(w, &x.row(j));
            }
        }
    }

    /// Number of stored entries in the busiest row.
    pub fn max_row_nnz(&self) -> usize {
        (0..self.n)
            .map(|i| self.row_ptr[i + 1] - self.row_ptr[i])
            .max()
            .unwrap_or(0)
    }
}

/// Dense normalized Laplacian with the degree vector it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    pub matrix: Array2<f64>,
    pub degrees: Array1<f64>,
}

impl Laplacian {
    pub fn size(&self) -> usize {
        self.degrees.len()
    }

    /// `x^T L x`.
    pub fn quadratic_form(&self, x: ArrayView1<'_, f64>) -> f64 {
        x.dot(&self.matrix.dot(&x))
    }
}

/// For each image, the ordered indices of its most similar other images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborList {
    pub k: usize,
    pub indices: Vec<Vec<usize>>,
}

impl NeighborList {
    pub fn of(&self, i: usize) -> &[usize] {
        &self.indices[i]
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}
