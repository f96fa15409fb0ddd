use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= nrows || c >= ncols {
                return Err(Error::Dimension(format!(
                    "entry ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
        }
        sorted.sort_by_key(|e| (e.1, e.0));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
            last = Some((r, c));
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(SparseMatrix { nrows, ncols, col_ptr, row_idx, values })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix { nrows, ncols, col_ptr: vec![0; ncols + 1], row_idx: Vec::new(), values: Vec::new() }
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries of column `j` as `(row, value)` pairs.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// All entries ordered by row, then column.
    pub fn row_major_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> =
            (0..self.ncols).flat_map(|j| self.column(j).map(move |(i, v)| (i, j, v))).collect();
        out.sort_by_key(|e| (e.0, e.1));
        out
    }

    /// Row-wise adjacency lists.
    pub fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.nrows];
        for j in 0..self.ncols {
            for (i, v) in self.column(j) {
                rows[i].push((j, v));
            }
        }
        rows
    }

    /// `A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (j, &xj) in x.iter().enumerate().take(self.ncols) {
            if xj == 0.0 {
                continue;
            }
            for (i, v) in self.column(j) {
                out[i] += v * xj;
            }
        }
        out
    }

    /// `Aᵀ y`
    pub fn tmul_vec(&self, y: &[f64]) -> Vec<f64> {
        (0..self.ncols).map(|j| self.column(j).map(|(i, v)| v * y[i]).sum()).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            for (i, v) in self.column(j) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.to_dense(), DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn products_match_dense() {
        let t = [(0, 0, 1.0), (2, 0, -2.0), (1, 1, 0.5), (2, 2, 3.0), (0, 2, 1.5)];
        let a = SparseMatrix::from_triplets(3, 3, &t).unwrap();
        let d = a.to_dense();
        let x = [1.0, -2.0, 0.5];
        let dx = &d * nalgebra::DVector::from_column_slice(&x);
        assert_eq!(a.mul_vec(&x), dx.as_slice());
        let dtx = d.transpose() * nalgebra::DVector::from_column_slice(&x);
        assert_eq!(a.tmul_vec(&x), dtx.as_slice());
    }

    #[test]
    fn out_of_range_entry_is_rejected() {
        assert!(SparseMatrix::from_triplets(1, 1, &[(1, 0, 1.0)]).is_err());
    }
}
