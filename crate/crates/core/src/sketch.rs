//! Randomized low-rank approximations from Gaussian sketches.

use nalgebra::DMatrix;

use crate::bregman::LowRank;
use crate::dense::{sym_eig, thin_qr, DenseMatrix};
use crate::eigsolve::LinearOperator;
use crate::error::{Error, Result};
use crate::rng::NormalStream;
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SketchParams {
    /// Additive oversampling `p` for Nyström (sketch width `r + p`).
    pub oversample_add: usize,
    /// Multiplicative oversampling `c` for the indefinite variant (width `ceil(c r)`).
    pub oversample_mul: f64,
    pub seed: u64,
}

impl Default for SketchParams {
    fn default() -> Self {
        Self {
            oversample_add: 60,
            oversample_mul: 1.5,
            seed: 0,
        }
    }
}

impl SketchParams {
    fn validate(&self) -> Result<()> {
        if !(self.oversample_mul > 1.0 && self.oversample_mul.is_finite()) {
            return Err(Error::Domain(format!(
                "multiplicative oversampling must exceed 1, got {}",
                self.oversample_mul
            )));
        }
        Ok(())
    }
}

/// `n x k` matrix of seeded standard normals, filled column by column.
pub fn gaussian_sketch(n: usize, k: usize, seed: u64) -> DenseMatrix {
    let mut rng = NormalStream::new(seed);
    let mut omega = DMatrix::zeros(n, k);
    rng.fill_normal(omega.as_mut_slice());
    omega
}

fn apply_block<O: LinearOperator + ?Sized>(op: &O, omega: &DenseMatrix) -> DenseMatrix {
    let mut y = DMatrix::zeros(omega.nrows(), omega.ncols());
    for j in 0..omega.ncols() {
        op.apply(omega.column(j).as_slice(), y.column_mut(j).as_mut_slice());
    }
    y
}

/// Core of both Nyström variants: `Y C_r^+ Y^T` in eigen-form, where `C_r`
/// keeps the `r` largest-magnitude eigenvalues of `C = Omega^T Y` that are
/// above the pseudo-inverse threshold.
fn nystrom_from_sketch(n: usize, omega: &DenseMatrix, y: &DenseMatrix, r: usize) -> Result<LowRank> {
    let core = omega.transpose() * y;
    let eig = sym_eig(&core)?;
    let mut order: Vec<usize> = (0..eig.len()).collect();
    order.sort_by(|&a, &b| eig.values[b].abs().total_cmp(&eig.values[a].abs()).then(a.cmp(&b)));
    let top = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = n as f64 * f64::EPSILON * top;
    let kept: Vec<usize> = order
        .into_iter()
        .take(r)
        .filter(|&i| eig.values[i].abs() > threshold && top > 0.0)
        .collect();

    let low_rank = if kept.is_empty() {
        LowRank::empty(n)
    } else {
        let mut b = DMatrix::zeros(n, kept.len());
        let mut inv = Vec::with_capacity(kept.len());
        for (dst, &src) in kept.iter().enumerate() {
            b.set_column(dst, &(y * eig.vectors.column(src)));
            inv.push(1.0 / eig.values[src]);
        }
        let (q, rfac) = thin_qr(&b)?;
        let mut scaled = rfac.clone();
        for (j, &s) in inv.iter().enumerate() {
            scaled.column_mut(j).scale_mut(s);
        }
        let small = sym_eig(&(scaled * rfac.transpose()))?;
        LowRank::new(q * small.vectors, small.values)?
    };

    if low_rank.rank() < r {
        return Err(Error::RankCollapse {
            achieved: low_rank.rank(),
            requested: r,
            partial: Box::new(low_rank),
        });
    }
    Ok(low_rank)
}

/// Rank-`r` Nyström approximation with `r + p` sketch columns. Exactly
/// `min(r + p, n)` operator applications.
pub fn nystrom<O: LinearOperator + ?Sized>(op: &O, r: usize, params: &SketchParams) -> Result<LowRank> {
    let n = op.dim();
    if r == 0 {
        return Ok(LowRank::empty(n));
    }
    if r > n {
        return Err(Error::Domain(format!("rank {r} exceeds order {n}")));
    }
    let k = (r + params.oversample_add).min(n);
    let omega = gaussian_sketch(n, k, params.seed);
    let y = apply_block(op, &omega);
    nystrom_from_sketch(n, &omega, &y, r)
}

/// Nyström variant for indefinite operators: `ceil(c r)` sketch columns,
/// and the inner matrix truncated to rank `r` by magnitude before it is
/// pseudo-inverted.
pub fn nystrom_indefinite<O: LinearOperator + ?Sized>(op: &O, r: usize, params: &SketchParams) -> Result<LowRank> {
    params.validate()?;
    let n = op.dim();
    if r == 0 {
        return Ok(LowRank::empty(n));
    }
    if r > n {
        return Err(Error::Domain(format!("rank {r} exceeds order {n}")));
    }
    let k = sketch_width_indefinite(r, params.oversample_mul).min(n);
    let omega = gaussian_sketch(n, k, params.seed);
    let y = apply_block(op, &omega);
    nystrom_from_sketch(n, &omega, &y, r)
}

pub fn sketch_width_indefinite(r: usize, c: f64) -> usize {
    (c * r as f64 - 1e-9).ceil() as usize
}

/// Square operator with both `A x` and `A^T x`.
pub trait GeneralOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

impl GeneralOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        LinearOperator::apply(self, x, y)
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        let xv = nalgebra::DVectorView::from_slice(x, self.nrows());
        let mut yv = nalgebra::DVectorViewMut::from_slice(y, self.ncols());
        yv.gemv_tr(1.0, self, &xv, 0.0);
    }
}

impl GeneralOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y).expect("operator dimensions");
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.spmv_transpose(x).expect("operator dimensions"));
    }
}

/// Truncated randomized SVD `A ~ U diag(sigma) V^T`.
#[derive(Clone, Debug)]
pub struct Rsvd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

/// Range finder on an `n x (r + p)` sketch, followed by an SVD of the
/// projected matrix; `U` is the range basis times the small left factor.
pub fn rsvd<O: GeneralOperator + ?Sized>(op: &O, r: usize, params: &SketchParams) -> Result<Rsvd> {
    let n = op.dim();
    if r > n {
        return Err(Error::Domain(format!("rank {r} exceeds order {n}")));
    }
    if r == 0 {
        return Ok(Rsvd {
            u: DMatrix::zeros(n, 0),
            sigma: Vec::new(),
            v: DMatrix::zeros(n, 0),
        });
    }
    let k = (r + params.oversample_add).min(n);
    let omega = gaussian_sketch(n, k, params.seed);
    let mut y = DMatrix::zeros(n, k);
    for j in 0..k {
        op.apply(omega.column(j).as_slice(), y.column_mut(j).as_mut_slice());
    }
    let (range, _) = thin_qr(&y)?;
    // B^T = A^T O, so B = O^T A is k x n
    let mut bt = DMatrix::zeros(n, k);
    for j in 0..k {
        op.apply_transpose(range.column(j).as_slice(), bt.column_mut(j).as_mut_slice());
    }
    let svd = bt.svd(true, true);
    let (left_t, right_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    order.truncate(r);
    // B^T = L S R^T  =>  B = R S L^T, so U_hat = R and V = L
    let mut u_hat = DMatrix::zeros(k, order.len());
    let mut v = DMatrix::zeros(n, order.len());
    let mut sigma = Vec::with_capacity(order.len());
    for (dst, &src) in order.iter().enumerate() {
        u_hat.set_column(dst, &right_t.row(src).transpose());
        v.set_column(dst, &left_t.column(src));
        sigma.push(svd.singular_values[src]);
    }
    Ok(Rsvd {
        u: &range * u_hat,
        sigma,
        v,
    })
}

impl Rsvd {
    pub fn to_dense(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for (j, &s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * self.v.transpose()
    }
}
