//! Compressed sparse row storage and the handful of kernels the solvers need.
//!
//! All kernels sum in row-major, ascending-column order so repeated runs are
//! bitwise reproducible.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Real sparse matrix in CSR layout.
///
/// Column indices are strictly increasing within a row and every stored value
/// is finite. Explicit zeros are allowed and kept.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 {
            return Err(Error::InvalidMatrix(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                n_rows + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr[n_rows] != col_idx.len() || col_idx.len() != values.len() {
            return Err(Error::InvalidMatrix(
                "row_ptr bounds do not match stored entries".into(),
            ));
        }
        for i in 0..n_rows {
            let (start, end) = (row_ptr[i], row_ptr[i + 1]);
            if start > end || end > col_idx.len() {
                return Err(Error::InvalidMatrix(format!("row_ptr decreases at row {i}")));
            }
            let cols = &col_idx[start..end];
            if let Some(&c) = cols.iter().find(|&&c| c >= n_cols) {
                return Err(Error::InvalidMatrix(format!(
                    "column {c} out of range in row {i}"
                )));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidMatrix(format!(
                    "columns not strictly increasing in row {i}"
                )));
            }
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!("non-finite value at entry {k}")));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed; explicit zeros are kept.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::InvalidMatrix(format!(
                    "entry ({i}, {j}) outside {n_rows}x{n_cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidMatrix(format!("non-finite value at ({i}, {j})")));
            }
            counts[i + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n_rows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            // stable sort keeps file order for duplicates, so sums are deterministic
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::new(n_rows, n_cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Stores every entry of `m` whose magnitude exceeds `drop_below`.
    /// Diagonal entries of square matrices are always stored.
    pub fn from_dense(m: &DMatrix<f64>, drop_below: f64) -> Result<Self> {
        let mut triplets = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v.abs() > drop_below || (i == j && m.is_square()) {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &triplets)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    /// Stored value at `(i, j)`, `None` if the position is not in the pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i).unwrap_or(0.0))
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                col_idx[next[j]] = i;
                values[next[j]] = v;
                next[j] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr: counts,
            col_idx,
            values,
        }
    }

    /// Exact structural and numerical symmetry check.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && *self == self.transpose()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Lower triangle including the diagonal.
    pub fn lower_triangle(&self) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                found: x.len(),
            });
        }
        if y.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                found: y.len(),
            });
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *yi = acc;
        }
        Ok(())
    }

    /// `y = A^T x`.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }
}

/// `y = A x` as a free function.
pub fn spmv(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.spmv(x)
}

/// Sparse lower-triangular factor with strictly positive diagonal, stored
/// row-wise with the diagonal as the last entry of each row.
#[derive(Clone, Debug, PartialEq)]
pub struct CholFactor {
    l: CsrMatrix,
}

impl CholFactor {
    pub fn new(l: CsrMatrix) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::NotSquare {
                rows: l.n_rows(),
                cols: l.n_cols(),
            });
        }
        for i in 0..l.n_rows() {
            let (cols, vals) = l.row(i);
            match cols.last() {
                Some(&c) if c == i => {}
                Some(&c) if c > i => {
                    return Err(Error::InvalidMatrix(format!(
                        "factor is not lower triangular (entry ({i}, {c}))"
                    )))
                }
                _ => return Err(Error::NonPositiveDiagonal { row: i }),
            }
            if *vals.last().unwrap() <= 0.0 {
                return Err(Error::NonPositiveDiagonal { row: i });
            }
        }
        Ok(Self { l })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            l: CsrMatrix::identity(n),
        }
    }

    /// Lower triangle of a dense matrix, used to wrap dense Cholesky factors.
    pub fn from_dense_lower(m: &DMatrix<f64>) -> Result<Self> {
        let mut triplets = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..=i.min(m.ncols().saturating_sub(1)) {
                let v = m[(i, j)];
                if v != 0.0 || i == j {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::new(CsrMatrix::from_triplets(m.nrows(), m.ncols(), &triplets)?)
    }

    pub fn n(&self) -> usize {
        self.l.n_rows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.l
    }

    pub fn nnz(&self) -> usize {
        self.l.nnz()
    }

    /// `L^{-1} b`, or `L^{-T} b` when `transposed`.
    pub fn solve(&self, b: &[f64], transposed: bool) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x, transposed)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64], transposed: bool) -> Result<()> {
        let n = self.n();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        if !transposed {
            for i in 0..n {
                let (cols, vals) = self.l.row(i);
                let last = cols.len() - 1;
                let mut acc = x[i];
                for k in 0..last {
                    acc -= vals[k] * x[cols[k]];
                }
                x[i] = acc / vals[last];
            }
        } else {
            // column sweep over the rows of L, i.e. backward substitution with L^T
            for i in (0..n).rev() {
                let (cols, vals) = self.l.row(i);
                let last = cols.len() - 1;
                let xi = x[i] / vals[last];
                x[i] = xi;
                for k in 0..last {
                    x[cols[k]] -= vals[k] * xi;
                }
            }
        }
        Ok(())
    }

    /// `L x` (or `L^T x`), the inverse of [`CholFactor::solve`].
    pub fn multiply(&self, x: &[f64], transposed: bool) -> Result<Vec<f64>> {
        if transposed {
            self.l.spmv_transpose(x)
        } else {
            self.l.spmv(x)
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.l.to_dense()
    }
}

/// Triangular solve with a Cholesky-type factor.
pub fn tri_solve(l: &CholFactor, b: &[f64], transposed: bool) -> Result<Vec<f64>> {
    l.solve(b, transposed)
}

/// Forms `A^T A` for a (possibly rectangular) sparse `A`.
///
/// The lower triangle is accumulated row by row and mirrored, so the result
/// is exactly symmetric.
pub fn sparse_ata(a: &CsrMatrix) -> CsrMatrix {
    let n = a.n_cols();
    let at = a.transpose();
    let mut acc = vec![0.0; n];
    let mut marker = vec![usize::MAX; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut lower: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);

    for i in 0..n {
        touched.clear();
        // column i of A = row i of A^T
        let (rows_k, vals_k) = at.row(i);
        for (&k, &a_ki) in rows_k.iter().zip(vals_k) {
            let (cols, vals) = a.row(k);
            for (&j, &a_kj) in cols.iter().zip(vals) {
                if j > i {
                    break;
                }
                if marker[j] != i {
                    marker[j] = i;
                    acc[j] = 0.0;
                    touched.push(j);
                }
                acc[j] += a_ki * a_kj;
            }
        }
        touched.sort_unstable();
        lower.push(touched.iter().map(|&j| (j, acc[j])).collect());
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, entries) in lower.iter().enumerate() {
        for &(j, v) in entries {
            rows[i].push((j, v));
            if j != i {
                rows[j].push((i, v));
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for mut r in rows {
        r.sort_unstable_by_key(|&(j, _)| j);
        for (j, v) in r {
            col_idx.push(j);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix {
        n_rows: n,
        n_cols: n,
        row_ptr,
        col_idx,
        values,
    }
}
