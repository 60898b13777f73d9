//! Matrix-free symmetric eigensolver and the two spectral extractors used to
//! approximate the low-rank correction without densifying the error.
//!
//! [`lanczos_tr`] is a thick-restart Lanczos iteration (the symmetric case of
//! Krylov–Schur) with full reorthogonalization. Each cycle expands the basis
//! to `want + slack` vectors, computes Ritz pairs of the projected matrix and,
//! if the wanted pairs have not converged, restarts from the leading Ritz
//! vectors plus the current residual direction.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

use crate::bregman::LowRank;
use crate::dense::{sym_eig, DenseMatrix};
use crate::error::{Error, Result};
use crate::rng::NormalStream;
use crate::sparse::{CholFactor, CsrMatrix};

/// Symmetric linear map applied to dense vectors.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `y = A x`. Both slices have length [`LinearOperator::dim`].
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        let xv = nalgebra::DVectorView::from_slice(x, self.ncols());
        let mut yv = nalgebra::DVectorViewMut::from_slice(y, n);
        yv.gemv(1.0, self, &xv, 0.0);
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y).expect("operator dimensions");
    }
}

impl<O: LinearOperator + ?Sized> LinearOperator for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

/// `x -> shift * x + sign * Q^-1 S Q^-T x`, counting products with `S`.
///
/// The three instances used here are `Q^-1 S Q^-T` itself, the scaled error
/// `Q^-1 S Q^-T - I`, and the reflected operator `eta I - Q^-1 S Q^-T`.
pub struct SandwichOperator<'a> {
    s: &'a CsrMatrix,
    q: &'a CholFactor,
    sign: f64,
    shift: f64,
    s_matvecs: Cell<usize>,
}

impl<'a> SandwichOperator<'a> {
    fn with(s: &'a CsrMatrix, q: &'a CholFactor, sign: f64, shift: f64) -> Result<Self> {
        if !s.is_square() {
            return Err(Error::NotSquare {
                rows: s.n_rows(),
                cols: s.n_cols(),
            });
        }
        if q.n() != s.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: s.n_rows(),
                found: q.n(),
            });
        }
        Ok(Self {
            s,
            q,
            sign,
            shift,
            s_matvecs: Cell::new(0),
        })
    }

    /// `Q^-1 S Q^-T`.
    pub fn new(s: &'a CsrMatrix, q: &'a CholFactor) -> Result<Self> {
        Self::with(s, q, 1.0, 0.0)
    }

    /// `Q^-1 S Q^-T - I`.
    pub fn scaled_error(s: &'a CsrMatrix, q: &'a CholFactor) -> Result<Self> {
        Self::with(s, q, 1.0, -1.0)
    }

    /// `eta I - Q^-1 S Q^-T`.
    pub fn reflected(s: &'a CsrMatrix, q: &'a CholFactor, eta: f64) -> Result<Self> {
        Self::with(s, q, -1.0, eta)
    }

    pub fn s_matvecs(&self) -> usize {
        self.s_matvecs.get()
    }
}

impl LinearOperator for SandwichOperator<'_> {
    fn dim(&self) -> usize {
        self.s.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut t = x.to_vec();
        self.q.solve_in_place(&mut t, true).expect("operator dimensions");
        self.s.spmv_into(&t, y).expect("operator dimensions");
        self.s_matvecs.set(self.s_matvecs.get() + 1);
        self.q.solve_in_place(y, false).expect("operator dimensions");
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi = self.shift * xi + self.sign * *yi;
        }
    }
}

/// Wraps an operator and counts applications.
pub struct CountingOperator<O> {
    inner: O,
    count: Cell<usize>,
}

impl<O: LinearOperator> CountingOperator<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            count: Cell::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.get()
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: LinearOperator> LinearOperator for CountingOperator<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.count.set(self.count.get() + 1);
        self.inner.apply(x, y)
    }
}

/// Krylov–Schur / thick-restart parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigsParams {
    /// Maximum number of restarts.
    pub max_restarts: usize,
    /// Relative Ritz residual tolerance.
    pub tol: f64,
    /// Extra subspace dimension beyond the wanted count.
    pub slack: usize,
    pub seed: u64,
}

impl EigsParams {
    /// Settings for the smaller rank fraction of the large suite.
    pub fn small_rank() -> Self {
        Self {
            max_restarts: 60,
            tol: 1e-2,
            slack: 60,
            seed: 0,
        }
    }

    /// Settings for the larger rank fraction of the large suite.
    pub fn large_rank() -> Self {
        Self {
            max_restarts: 100,
            tol: 1e-2,
            slack: 100,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("eigensolver tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

impl Default for EigsParams {
    fn default() -> Self {
        Self::small_rank()
    }
}

/// Which end of the spectrum to target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    LargestAlgebraic,
    LargestMagnitude,
}

/// Ritz approximations. `values` are sorted by the targeted ordering
/// (descending, or descending magnitude for [`Which::LargestMagnitude`]).
#[derive(Clone, Debug)]
pub struct EigenEstimate {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
    /// `||A v_i - theta_i v_i||`, recomputed explicitly from the returned pairs.
    pub residual_norms: Vec<f64>,
    pub converged_count: usize,
    pub matvec_count: usize,
}

impl EigenEstimate {
    fn empty(n: usize) -> Self {
        Self {
            values: Vec::new(),
            vectors: DenseMatrix::zeros(n, 0),
            residual_norms: Vec::new(),
            converged_count: 0,
            matvec_count: 0,
        }
    }
}

fn converged(theta: f64, residual: f64, tol: f64, n: usize) -> bool {
    residual <= tol * theta.abs().max(f64::EPSILON * n as f64)
}

fn ritz_order(values: &[f64], which: Which) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    match which {
        Which::LargestAlgebraic => order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b))),
        Which::LargestMagnitude => {
            order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)))
        }
    }
    order
}

/// Orthogonalizes `w` against the first `k` columns of `v` (two passes of
/// classical Gram–Schmidt). Returns the accumulated coefficients.
fn orthogonalize(v: &DMatrix<f64>, k: usize, w: &mut DVector<f64>) -> DVector<f64> {
    let basis = v.columns(0, k);
    let mut h = basis.tr_mul(w);
    w.gemv(-1.0, &basis, &h, 1.0);
    let h2 = basis.tr_mul(w);
    w.gemv(-1.0, &basis, &h2, 1.0);
    h += h2;
    h
}

/// Random unit vector orthogonal to the first `k` columns of `v`, or `None`
/// when those columns already span the space.
fn fresh_direction(v: &DMatrix<f64>, k: usize, rng: &mut NormalStream) -> Option<DVector<f64>> {
    let n = v.nrows();
    if k >= n {
        return None;
    }
    for _ in 0..3 {
        let mut w = DVector::from_vec(rng.normal_vec(n));
        let before = w.norm();
        orthogonalize(v, k, &mut w);
        let after = w.norm();
        if after > 1e-8 * before {
            return Some(w / after);
        }
    }
    None
}

/// `want` algebraically largest eigenpairs of a symmetric operator.
///
/// An eigenpair counts as converged once its Ritz residual is at most
/// `tol * max(|theta|, eps * n)`. If the wanted pairs do not all converge
/// within `max_restarts` restarts, [`Error::NoConvergence`] carries the
/// partial estimate.
pub fn lanczos_tr<O: LinearOperator + ?Sized>(op: &O, want: usize, params: &EigsParams) -> Result<EigenEstimate> {
    lanczos_tr_which(op, want, params, Which::LargestAlgebraic)
}

pub fn lanczos_tr_which<O: LinearOperator + ?Sized>(
    op: &O,
    want: usize,
    params: &EigsParams,
    which: Which,
) -> Result<EigenEstimate> {
    params.validate()?;
    let n = op.dim();
    if want == 0 {
        return Ok(EigenEstimate::empty(n));
    }
    if want > n {
        return Err(Error::Domain(format!("requested {want} eigenpairs of an order-{n} operator")));
    }
    let m = (want + params.slack).min(n);
    let mut rng = NormalStream::new(params.seed);
    let mut v = DMatrix::<f64>::zeros(n, m + 1);
    let mut t = DMatrix::<f64>::zeros(m, m);
    let mut w = DVector::<f64>::zeros(n);
    let mut matvecs = 0usize;

    let start = fresh_direction(&v, 0, &mut rng).expect("nonempty space");
    v.set_column(0, &start);

    let mut kept = 0usize;
    let mut scale = 0.0f64;
    let mut restart = 0usize;
    loop {
        let mut beta = 0.0;
        for j in kept..m {
            op.apply(v.column(j).as_slice(), w.as_mut_slice());
            matvecs += 1;
            let h = orthogonalize(&v, j + 1, &mut w);
            for i in 0..j {
                t[(i, j)] = h[i];
                t[(j, i)] = h[i];
            }
            t[(j, j)] = h[j];
            scale = scale.max(h[j].abs());
            beta = w.norm();
            scale = scale.max(beta);
            if beta > 1e-13 * scale.max(f64::MIN_POSITIVE) {
                v.set_column(j + 1, &(&w / beta));
            } else {
                // invariant subspace: continue from a fresh orthogonal direction
                beta = 0.0;
                match fresh_direction(&v, j + 1, &mut rng) {
                    Some(d) => v.set_column(j + 1, &d),
                    None => v.column_mut(j + 1).fill(0.0),
                }
            }
        }

        let ritz = sym_eig(&t)?;
        let order = ritz_order(&ritz.values, which);
        let estimates: Vec<f64> = order.iter().map(|&c| (beta * ritz.vectors[(m - 1, c)]).abs()).collect();
        let nconv = (0..want)
            .filter(|&i| converged(ritz.values[order[i]], estimates[i], params.tol, n))
            .count();

        if nconv == want || restart >= params.max_restarts || m == n {
            let mut y = DMatrix::zeros(m, want);
            let mut values = Vec::with_capacity(want);
            for (dst, &src) in order.iter().take(want).enumerate() {
                y.set_column(dst, &ritz.vectors.column(src));
                values.push(ritz.values[src]);
            }
            let vectors = v.columns(0, m) * y;
            let mut residual_norms = Vec::with_capacity(want);
            let mut av = vec![0.0; n];
            for (i, &theta) in values.iter().enumerate() {
                let x = vectors.column(i);
                op.apply(x.as_slice(), &mut av);
                matvecs += 1;
                let r: f64 = av.iter().zip(x.iter()).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
                residual_norms.push(r);
            }
            let converged_count = values
                .iter()
                .zip(&residual_norms)
                .filter(|(&th, &r)| converged(th, r, params.tol, n))
                .count();
            let estimate = EigenEstimate {
                values,
                vectors,
                residual_norms,
                converged_count,
                matvec_count: matvecs,
            };
            if converged_count < want {
                return Err(Error::NoConvergence {
                    converged: converged_count,
                    wanted: want,
                    partial: Box::new(estimate),
                });
            }
            return Ok(estimate);
        }

        // thick restart: keep the leading Ritz vectors, continue from the residual
        let keep = (want + (m - want) / 2).max(nconv).min(m - 1);
        let mut y = DMatrix::zeros(m, keep);
        for (dst, &src) in order.iter().take(keep).enumerate() {
            y.set_column(dst, &ritz.vectors.column(src));
        }
        let kept_vectors = v.columns(0, m) * y;
        let residual_dir = v.column(m).clone_owned();
        v.columns_mut(0, keep).copy_from(&kept_vectors);
        v.set_column(keep, &residual_dir);
        t.fill(0.0);
        for (i, &src) in order.iter().take(keep).enumerate() {
            t[(i, i)] = ritz.values[src];
        }
        kept = keep;
        restart += 1;
    }
}

/// Low-rank part of the scaled error from its largest eigenvalues.
#[derive(Clone, Debug)]
pub struct SpectralPart {
    pub low_rank: LowRank,
    pub estimate: EigenEstimate,
}

impl SpectralPart {
    pub fn s_matvecs(&self) -> usize {
        self.estimate.matvec_count
    }
}

/// `W = H (D - I) H^T` from Ritz pairs `(D, H)` of `Q^-1 S Q^-T`.
pub fn positive_from_estimate(estimate: &EigenEstimate) -> Result<LowRank> {
    LowRank::new(
        estimate.vectors.clone(),
        estimate.values.iter().map(|&d| d - 1.0).collect(),
    )
}

/// `W = H ((eta - 1) I - D) H^T` from Ritz pairs `(D, H)` of
/// `eta I - Q^-1 S Q^-T`.
pub fn negative_from_estimate(estimate: &EigenEstimate, eta: f64) -> Result<LowRank> {
    let lam: Vec<f64> = estimate.values.iter().map(|&d| (eta - 1.0) - d).collect();
    if let Some(&bad) = lam.iter().find(|&&l| l <= -1.0) {
        return Err(Error::EtaTooSmall { eta, lam: bad });
    }
    LowRank::new(estimate.vectors.clone(), lam)
}

/// `r_plus` largest eigenpairs of `Q^-1 S Q^-T`, shifted down by one.
pub fn largest_part(s: &CsrMatrix, q: &CholFactor, r_plus: usize, params: &EigsParams) -> Result<SpectralPart> {
    let op = SandwichOperator::new(s, q)?;
    if r_plus == 0 {
        return Ok(SpectralPart {
            low_rank: LowRank::empty(op.dim()),
            estimate: EigenEstimate::empty(op.dim()),
        });
    }
    let estimate = lanczos_tr(&op, r_plus, params)?;
    Ok(SpectralPart {
        low_rank: positive_from_estimate(&estimate)?,
        estimate,
    })
}

/// `r_minus` smallest eigenpairs of the scaled error, computed as the
/// largest eigenpairs of `eta I - Q^-1 S Q^-T` and shifted back. No linear
/// solves with the shifted operator are performed.
pub fn smallest_part(
    s: &CsrMatrix,
    q: &CholFactor,
    r_minus: usize,
    eta: f64,
    params: &EigsParams,
) -> Result<SpectralPart> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::Domain(format!("shift must be positive and finite, got {eta}")));
    }
    let op = SandwichOperator::reflected(s, q, eta)?;
    if r_minus == 0 {
        return Ok(SpectralPart {
            low_rank: LowRank::empty(op.dim()),
            estimate: EigenEstimate::empty(op.dim()),
        });
    }
    let estimate = lanczos_tr(&op, r_minus, params)?;
    Ok(SpectralPart {
        low_rank: negative_from_estimate(&estimate, eta)?,
        estimate,
    })
}

/// Upper bound for the spectrum of `Q^-1 S Q^-T` from its top Ritz pair:
/// the value inflated by its residual norm plus a 1% margin.
pub fn shift_from_ritz(value: f64, residual: f64) -> f64 {
    (value + residual) * 1.01
}
