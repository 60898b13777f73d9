//! Zero-fill incomplete Cholesky.

use crate::error::{Error, Result};
use crate::sparse::{CholFactor, CsrMatrix};

/// IC(0) factor of a symmetric matrix with positive diagonal.
///
/// Row-by-row left-looking recurrence restricted to the lower-triangular
/// pattern of `s` (explicit zeros included). With `diag_shift > 0` the
/// factorization is of `S + diag_shift * diag(S)`.
pub fn ic0(s: &CsrMatrix, diag_shift: f64) -> Result<CholFactor> {
    if !s.is_square() {
        return Err(Error::NotSquare {
            rows: s.n_rows(),
            cols: s.n_cols(),
        });
    }
    if !(diag_shift >= 0.0 && diag_shift.is_finite()) {
        return Err(Error::Domain(format!("diag_shift must be >= 0, got {diag_shift}")));
    }
    let n = s.n_rows();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx: Vec<usize> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    row_ptr.push(0);

    // dense scatter of the partially computed row i, indexed by column
    let mut work = vec![0.0; n];
    let mut diag_of = vec![0.0; n];

    for i in 0..n {
        let (cols, vals) = s.row(i);
        let start = col_idx.len();
        let mut has_diag = false;
        for (&j, &sij) in cols.iter().zip(vals) {
            if j > i {
                break;
            }
            if j == i {
                has_diag = true;
                let a_ii = sij * (1.0 + diag_shift);
                let mut d = a_ii;
                for &v in &values[start..] {
                    d -= v * v;
                }
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::Breakdown { row: i });
                }
                let l_ii = d.sqrt();
                col_idx.push(i);
                values.push(l_ii);
                diag_of[i] = l_ii;
                break;
            }
            // L_ij = (S_ij - sum_{k<j} L_ik L_jk) / L_jj over the stored pattern
            let (jstart, jend) = (row_ptr[j], row_ptr[j + 1]);
            let mut acc = sij;
            for p in jstart..jend - 1 {
                acc -= work[col_idx[p]] * values[p];
            }
            let l_ij = acc / diag_of[j];
            work[j] = l_ij;
            col_idx.push(j);
            values.push(l_ij);
        }
        if !has_diag {
            return Err(Error::Breakdown { row: i });
        }
        for &j in &col_idx[start..] {
            work[j] = 0.0;
        }
        row_ptr.push(col_idx.len());
    }

    CholFactor::new(CsrMatrix::new(n, n, row_ptr, col_idx, values)?)
}
