//! Datasets: a feature matrix in dense or sparse (CSR) storage plus a
//! response vector.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row} has {len} entries, expected {expected}")]
    InconsistentDimension { row: usize, len: usize, expected: usize },
    #[error("feature matrix has {x_rows} rows but response has {y_len}")]
    ShapeMismatch { x_rows: usize, y_len: usize },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
}

/// Compressed sparse row matrix with just the kernels this crate needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from per-row (column, value) entries. Entries within a row need
    /// not be sorted; they are sorted here.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(j, _)| j);
            for (j, v) in row {
                debug_assert!(j < ncols);
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        self.indices[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    pub fn matvec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        let mut out = Array1::<f64>::zeros(self.nrows);
        for i in 0..self.nrows {
            let mut acc = 0.0;
            for (j, v) in self.row_entries(i) {
                acc += v * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn rmatvec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut out = Array1::<f64>::zeros(self.ncols);
        for i in 0..self.nrows {
            let xi = x[i];
            if xi != 0.0 {
                for (j, v) in self.row_entries(i) {
                    out[j] += v * xi;
                }
            }
        }
        out
    }

    pub fn row_dot(&self, i: usize, x: ArrayView1<f64>) -> f64 {
        self.row_entries(i).map(|(j, v)| v * x[j]).sum()
    }

    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        let mut out_rows = Vec::with_capacity(rows.len());
        for &i in rows {
            out_rows.push(self.row_entries(i).collect());
        }
        SparseMatrix::from_rows(self.ncols, out_rows)
    }

    /// Column-compressed copy: per-column (row, value) lists for algorithms
    /// that walk columns (coordinate descent).
    pub fn to_columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row_entries(i) {
                cols[j].push((i, v));
            }
        }
        cols
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.nrows, self.ncols));
        for i in 0..self.nrows {
            for (j, v) in self.row_entries(i) {
                out[[i, j]] = v;
            }
        }
        out
    }
}

/// Feature matrix storage.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignMatrix {
    Dense(Array2<f64>),
    Sparse(SparseMatrix),
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            DesignMatrix::Dense(m) => m.nrows(),
            DesignMatrix::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            DesignMatrix::Dense(m) => m.ncols(),
            DesignMatrix::Sparse(m) => m.ncols(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, DesignMatrix::Dense(_))
    }

    /// `X β`
    pub fn matvec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            DesignMatrix::Dense(m) => m.dot(&x),
            DesignMatrix::Sparse(m) => m.matvec(x),
        }
    }

    /// `Xᵀ v`
    pub fn rmatvec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            DesignMatrix::Dense(m) => m.t().dot(&x),
            DesignMatrix::Sparse(m) => m.rmatvec(x),
        }
    }

    pub fn row_dot(&self, i: usize, x: ArrayView1<f64>) -> f64 {
        match self {
            DesignMatrix::Dense(m) => m.row(i).dot(&x),
            DesignMatrix::Sparse(m) => m.row_dot(i, x),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        match self {
            DesignMatrix::Dense(m) => {
                let mut out = Array2::<f64>::zeros((rows.len(), m.ncols()));
                for (r, &i) in rows.iter().enumerate() {
                    out.row_mut(r).assign(&m.row(i));
                }
                DesignMatrix::Dense(out)
            }
            DesignMatrix::Sparse(m) => DesignMatrix::Sparse(m.select_rows(rows)),
        }
    }

    /// Gather a column subset into a dense n×|cols| matrix.
    pub fn gather_columns(&self, cols: &[usize]) -> Array2<f64> {
        let n = self.nrows();
        let mut out = Array2::<f64>::zeros((n, cols.len()));
        match self {
            DesignMatrix::Dense(m) => {
                for (c, &j) in cols.iter().enumerate() {
                    out.column_mut(c).assign(&m.column(j));
                }
            }
            DesignMatrix::Sparse(m) => {
                let mut pos = vec![usize::MAX; m.ncols()];
                for (c, &j) in cols.iter().enumerate() {
                    pos[j] = c;
                }
                for i in 0..n {
                    for (j, v) in m.row_entries(i) {
                        if pos[j] != usize::MAX {
                            out[[i, pos[j]]] = v;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            DesignMatrix::Dense(m) => m.clone(),
            DesignMatrix::Sparse(m) => m.to_dense(),
        }
    }
}

/// The (X, y) pair everything else consumes.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DesignMatrix,
    pub y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: DesignMatrix, y: Array1<f64>) -> Result<Self, DataError> {
        if x.nrows() != y.len() {
            return Err(DataError::ShapeMismatch { x_rows: x.nrows(), y_len: y.len() });
        }
        Ok(Self { x, y })
    }

    pub fn dense(x: Array2<f64>, y: Array1<f64>) -> Result<Self, DataError> {
        Self::new(DesignMatrix::Dense(x), y)
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let y = Array1::from_iter(rows.iter().map(|&i| self.y[i]));
        Dataset { x: self.x.select_rows(rows), y }
    }
}
