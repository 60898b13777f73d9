//! Dense factorizations used by the exact truncations, the small inner
//! problems of the Krylov and sketching methods, and the test oracles.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Full spectral decomposition `M = V diag(values) V^T` with `values`
/// sorted in nonincreasing order.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        &scaled * self.vectors.transpose()
    }
}

fn check_square(m: &DenseMatrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub fn symmetrize(m: &DenseMatrix) -> DenseMatrix {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition. The input is symmetrized first; ties in
/// the descending sort keep the solver's original column order.
pub fn sym_eig(m: &DenseMatrix) -> Result<EigenDecomposition> {
    check_square(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: Vec::new(),
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Lower-triangular `L` with `L L^T = M`.
pub fn dense_cholesky(m: &DenseMatrix) -> Result<DenseMatrix> {
    check_square(m)?;
    let n = m.nrows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                what: format!("matrix (pivot {j} = {d:e})"),
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// `log det(M)` from a Cholesky factor.
pub fn cholesky_logdet(l: &DenseMatrix) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `L X = B` in place for lower-triangular `L`.
pub fn lower_solve_in_place(l: &DenseMatrix, b: &mut DenseMatrix) {
    let solved = l.solve_lower_triangular_mut(b);
    debug_assert!(solved);
}

/// Solves `L^T X = B` in place for lower-triangular `L`.
pub fn lower_transpose_solve_in_place(l: &DenseMatrix, b: &mut DenseMatrix) {
    let solved = l.tr_solve_lower_triangular_mut(b);
    debug_assert!(solved);
}

/// Solves `M x = b` given the Cholesky factor of `M`.
pub fn cholesky_solve(l: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let mut x = DenseMatrix::from_column_slice(b.len(), 1, b);
    lower_solve_in_place(l, &mut x);
    lower_transpose_solve_in_place(l, &mut x);
    x.as_slice().to_vec()
}

/// Reduced QR factorization `B = Q R` with `Q` `n x k` orthonormal and the
/// diagonal of `R` made nonnegative.
pub fn thin_qr(b: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (n, k) = b.shape();
    if n < k {
        return Err(Error::Domain(format!(
            "thin QR needs at least as many rows as columns ({n}x{k})"
        )));
    }
    if k == 0 {
        return Ok((DenseMatrix::zeros(n, 0), DenseMatrix::zeros(0, 0)));
    }
    let qr = b.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    Ok((q, r))
}

/// Largest absolute entry.
pub fn max_abs(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// `max |Q^T Q - I|` over the columns of `q`.
pub fn orthonormality_error(q: &DenseMatrix) -> f64 {
    let g = q.transpose() * q;
    max_abs(&(g - DenseMatrix::identity(q.ncols(), q.ncols())))
}
