//! Compressed sparse row matrices.
//!
//! Every assembled finite-element operator lives in this format. Rows hold
//! strictly increasing column indices; duplicate triplets are summed during
//! construction.

use crate::error::FlowError;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(u32, u32, f64)>) -> Self {
        trips.sort_unstable_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(trips.len());
        let mut values = Vec::with_capacity(trips.len());
        let mut prev: Option<(u32, u32)> = None;
        for &(r, c, v) in &trips {
            debug_assert!((r as usize) < nrows && (c as usize) < ncols);
            if prev == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r as usize + 1] += 1;
                prev = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        let m = Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        };
        debug_assert!(m.validate().is_ok());
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    /// Check the structural invariants.
    pub fn validate(&self) -> Result<(), FlowError> {
        if self.indptr.len() != self.nrows + 1 || self.indptr[0] != 0 {
            return Err(FlowError::Numeric("bad indptr".into()));
        }
        for i in 0..self.nrows {
            if self.indptr[i] > self.indptr[i + 1] {
                return Err(FlowError::Numeric("indptr not nondecreasing".into()));
            }
            let (cols, _) = self.row(i);
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(FlowError::Numeric("columns not strictly increasing".into()));
                }
            }
            if let Some(&c) = cols.last() {
                if c as usize >= self.ncols {
                    return Err(FlowError::Numeric("column index out of range".into()));
                }
            }
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k] as usize];
            }
            y[i] = s;
        }
    }

    /// y += alpha * A * x
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.values[k] * x[self.indices[k] as usize];
            }
            y[i] += alpha * s;
        }
    }

    /// y += alpha * A^T * x
    pub fn matvec_transpose_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for i in 0..self.nrows {
            let xi = alpha * x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[k] as usize] += self.values[k] * xi;
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            if let Ok(k) = cols.binary_search(&(i as u32)) {
                d[i] = vals[k];
            }
        }
        d
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = counts;
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let c = self.indices[k] as usize;
                let pos = next[c];
                next[c] += 1;
                indices[pos] = i as u32;
                values[pos] = self.values[k];
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }

    /// alpha * self + beta * other, general pattern merge.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> SparseMatrix {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0usize);
        let mut indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(indices.capacity());
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0usize, 0usize);
            while p < ca.len() || q < cb.len() {
                let (c, v) = if q >= cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                    let e = (ca[p], alpha * va[p]);
                    p += 1;
                    e
                } else if p >= ca.len() || cb[q] < ca[p] {
                    let e = (cb[q], beta * vb[q]);
                    q += 1;
                    e
                } else {
                    let e = (ca[p], alpha * va[p] + beta * vb[q]);
                    p += 1;
                    q += 1;
                    e
                };
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }

    /// Sparse product self * other.
    pub fn matmul(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, other.nrows);
        let n = other.ncols;
        let mut acc = vec![0.0f64; n];
        let mut mark = vec![u32::MAX; n];
        let mut touched: Vec<u32> = Vec::new();
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        indptr.push(0usize);
        let mut indices: Vec<u32> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            for k in self.indptr[i]..self.indptr[i + 1] {
                let a = self.values[k];
                let r = self.indices[k] as usize;
                for k2 in other.indptr[r]..other.indptr[r + 1] {
                    let c = other.indices[k2] as usize;
                    if mark[c] != i as u32 {
                        mark[c] = i as u32;
                        acc[c] = 0.0;
                        touched.push(c as u32);
                    }
                    acc[c] += a * other.values[k2];
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                indices.push(c);
                values.push(acc[c as usize]);
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: n,
            indptr,
            indices,
            values,
        }
    }

    /// Extract the submatrix with the given kept rows and columns.
    ///
    /// `col_map[j]` gives the new index of old column j, or None if dropped.
    pub fn submatrix(&self, rows: &[u32], col_map: &[Option<u32>]) -> SparseMatrix {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0usize);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let ncols = col_map.iter().flatten().count();
        for &r in rows {
            let (cols, vals) = self.row(r as usize);
            for (c, v) in cols.iter().zip(vals) {
                if let Some(nc) = col_map[*c as usize] {
                    indices.push(nc);
                    values.push(*v);
                }
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            nrows: rows.len(),
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max_ij |a_ij - a_ji|
    pub fn asymmetry(&self) -> f64 {
        self.add_scaled(1.0, &self.transpose(), -1.0).max_abs()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d[i][*c as usize] = *v;
            }
        }
        d
    }

    /// Debug dump in matrix-market coordinate format.
    pub fn write_matrix_market<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.17e}", i + 1, *c as usize + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Assemble scaled blocks into one matrix: entries of each `(mat, scale,
/// row_offset, col_offset)` land at the offset position.
pub fn from_blocks(
    nrows: usize,
    ncols: usize,
    blocks: &[(&SparseMatrix, f64, usize, usize)],
) -> SparseMatrix {
    let mut trips = Vec::new();
    for (a, s, ro, co) in blocks {
        if *s == 0.0 {
            continue;
        }
        for i in 0..a.nrows() {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                trips.push(((i + ro) as u32, (*c as usize + co) as u32, s * v));
            }
        }
    }
    SparseMatrix::from_triplets(nrows, ncols, trips)
}

/// Block-diagonal Kronecker lift: diag(a, a), doubling both dimensions.
pub fn kron2(a: &SparseMatrix) -> SparseMatrix {
    let (n, m) = (a.nrows(), a.ncols());
    let mut indptr = Vec::with_capacity(2 * n + 1);
    indptr.push(0usize);
    let mut indices = Vec::with_capacity(2 * a.nnz());
    let mut values = Vec::with_capacity(2 * a.nnz());
    for block in 0..2u32 {
        let off = block * m as u32;
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                indices.push(c + off);
                values.push(*v);
            }
            indptr.push(indices.len());
        }
    }
    SparseMatrix {
        nrows: 2 * n,
        ncols: 2 * m,
        indptr,
        indices,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let a = SparseMatrix::from_triplets(
            2,
            3,
            vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0), (0, 2, -1.0)],
        );
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.row(0), (&[1u32, 2][..], &[3.0, -1.0][..]));
        assert_eq!(a.row(1), (&[0u32][..], &[4.0][..]));
        a.validate().unwrap();
    }

    #[test]
    fn empty_rows_ok() {
        let a = SparseMatrix::from_triplets(4, 4, vec![(2, 3, 5.0)]);
        assert_eq!(a.row(0).0.len(), 0);
        assert_eq!(a.row(2).0, &[3u32][..]);
        a.validate().unwrap();
    }

    #[test]
    fn matvec_and_transpose() {
        let a = SparseMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]);
        let y = a.apply(&[1.0, 1.0, 1.0]);
        assert_eq!(y, vec![3.0, 3.0]);
        let at = a.transpose();
        let mut z = vec![0.0; 3];
        at.matvec(&[1.0, 1.0], &mut z);
        let mut z2 = vec![0.0; 3];
        a.matvec_transpose_add(1.0, &[1.0, 1.0], &mut z2);
        assert_eq!(z, z2);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, -1.0)]);
        let b = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 3.0), (1, 0, 1.0), (1, 1, 4.0)]);
        let c = a.matmul(&b);
        let d = c.to_dense();
        assert_eq!(d[0], vec![5.0, 8.0]);
        assert_eq!(d[1], vec![-1.0, -4.0]);
    }

    #[test]
    fn kron2_blocks() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 2.0), (1, 0, -1.0)]);
        let k = kron2(&a);
        assert_eq!(k.nrows(), 4);
        let y = k.apply(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(y, vec![4.0, -1.0, 8.0, -3.0]);
    }
}
