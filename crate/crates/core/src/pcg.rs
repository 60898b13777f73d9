//! Preconditioned conjugate gradient and dense diagnostics.

use std::time::Instant;

use crate::bregman::{divergence_ld, DEFAULT_DENSIFY_CAP};
use crate::dense::{dense_cholesky, lower_solve_in_place, sym_eig};
use crate::error::{Error, Result};
use crate::precond::Preconditioner;
use crate::sparse::CsrMatrix;

/// True residuals are recomputed at this interval and at termination.
pub const TRUE_RESIDUAL_INTERVAL: usize = 25;
/// Window (in iterations) over which the true residual must decrease.
pub const STAGNATION_WINDOW: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcgOptions {
    pub tol: f64,
    pub maxit: usize,
}

impl PcgOptions {
    /// Tolerance and iteration cap of the small (dense-checkable) suite.
    pub fn small_suite() -> Self {
        Self { tol: 1e-10, maxit: 100 }
    }

    /// Tolerance and iteration cap of the large suite.
    pub fn large_suite() -> Self {
        Self { tol: 1e-10, maxit: 350 }
    }
}

impl Default for PcgOptions {
    fn default() -> Self {
        Self::small_suite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    Stagnation,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIterations => "maxit",
            StopReason::Stagnation => "stagnation",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub converged: bool,
    pub reason: StopReason,
    pub iterations: usize,
    /// Relative residual per iteration; entry 0 is the initial guess `x0 = 0`.
    pub rel_residual_history: Vec<f64>,
    /// Always a true residual `||b - S x|| / ||b||`.
    pub final_rel_residual: f64,
    pub matvecs_s: usize,
    pub true_residual_checks: usize,
    /// Set when the recurrence and true residuals differ by more than `10 tol`.
    pub residual_gap: bool,
    pub time_construct_s: f64,
    pub time_solve_s: f64,
    pub preconditioner_label: String,
    pub r: Option<usize>,
    pub alpha: Option<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_residual(s: &CsrMatrix, b: &[f64], x: &[f64], out: &mut [f64]) -> Result<f64> {
    s.spmv_into(x, out)?;
    for (o, &bi) in out.iter_mut().zip(b) {
        *o = bi - *o;
    }
    Ok(norm(out))
}

/// PCG from `x0 = 0`.
///
/// Iteration stops when the recurrence residual reaches `tol` relative to
/// `||b||` and the recomputed true residual confirms it. If the true
/// residual disagrees, the recurrence residual is replaced and the search
/// direction restarted.
pub fn pcg_solve(s: &CsrMatrix, b: &[f64], p: &Preconditioner, opts: &PcgOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = s.n_rows();
    if !s.is_square() {
        return Err(Error::NotSquare { rows: n, cols: s.n_cols() });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    if p.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.dim() });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Err(Error::Domain("right-hand side is zero".into()));
    }
    let start = Instant::now();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = p.apply_inverse(&r)?;
    let mut rz = dot(&r, &z);
    if !(rz > 0.0) {
        return Err(Error::IndefinitePreconditionerDetected { iteration: 0 });
    }
    let mut d = z.clone();
    let mut q = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    let mut history = vec![1.0];
    let mut matvecs = 0usize;
    let mut checks = 0usize;
    let mut gap = false;
    // (iteration, true relative residual) at each check
    let mut check_log: Vec<(usize, f64)> = vec![(0, 1.0)];
    let mut reason = StopReason::MaxIterations;
    let mut final_true = 1.0;
    let mut final_is_current = true;

    let mut k = 0;
    while k < opts.maxit {
        k += 1;
        s.spmv_into(&d, &mut q)?;
        matvecs += 1;
        let dq = dot(&d, &q);
        let step = rz / dq;
        for i in 0..n {
            x[i] += step * d[i];
            r[i] -= step * q[i];
        }
        let mut rel = norm(&r) / bnorm;
        final_is_current = false;

        let hit = rel <= opts.tol;
        if hit || k % TRUE_RESIDUAL_INTERVAL == 0 {
            let t = true_residual(s, b, &x, &mut scratch)? / bnorm;
            matvecs += 1;
            checks += 1;
            final_true = t;
            final_is_current = true;
            if (t - rel).abs() > 10.0 * opts.tol && hit {
                gap = true;
            }
            check_log.push((k, t));
            rel = t;
            if hit {
                if t <= opts.tol {
                    history.push(rel);
                    reason = StopReason::Converged;
                    break;
                }
                // residual replacement and direction restart
                r.copy_from_slice(&scratch);
                p.apply_inverse_into(&r, &mut z)?;
                rz = dot(&r, &z);
                if !(rz > 0.0) {
                    return Err(Error::IndefinitePreconditionerDetected { iteration: k });
                }
                d.copy_from_slice(&z);
                history.push(rel);
                continue;
            }
            if let Some(&(_, old)) = check_log.iter().rev().find(|(it, _)| k - it >= STAGNATION_WINDOW) {
                if old - t < 10.0 * f64::EPSILON {
                    history.push(rel);
                    reason = StopReason::Stagnation;
                    break;
                }
            }
        }
        history.push(rel);

        p.apply_inverse_into(&r, &mut z)?;
        let rz_new = dot(&r, &z);
        if !(rz_new > 0.0) {
            return Err(Error::IndefinitePreconditionerDetected { iteration: k });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
    }

    if !final_is_current {
        final_true = true_residual(s, b, &x, &mut scratch)? / bnorm;
        matvecs += 1;
        checks += 1;
    }

    let report = SolveReport {
        converged: reason == StopReason::Converged,
        reason,
        iterations: k,
        rel_residual_history: history,
        final_rel_residual: final_true,
        matvecs_s: matvecs,
        true_residual_checks: checks,
        residual_gap: gap,
        time_construct_s: 0.0,
        time_solve_s: start.elapsed().as_secs_f64(),
        preconditioner_label: String::new(),
        r: None,
        alpha: None,
    };
    Ok((x, report))
}

fn check_cap(n: usize) -> Result<()> {
    if n > DEFAULT_DENSIFY_CAP {
        Err(Error::DensifyCapExceeded { n, cap: DEFAULT_DENSIFY_CAP })
    } else {
        Ok(())
    }
}

/// `kappa_2(L_P^-1 S L_P^-T)` with `L_P` the Cholesky factor of dense `P`.
pub fn cond2_preconditioned(s: &CsrMatrix, p: &Preconditioner) -> Result<f64> {
    let n = s.n_rows();
    check_cap(n)?;
    let lp = dense_cholesky(&p.to_dense()).map_err(|_| Error::NotPositiveDefinite { what: "preconditioner".into() })?;
    let mut m = s.to_dense();
    lower_solve_in_place(&lp, &mut m);
    let mut m = m.transpose();
    lower_solve_in_place(&lp, &mut m);
    let eig = sym_eig(&m)?;
    let (hi, lo) = (eig.values[0], eig.values[n - 1]);
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite { what: "preconditioned matrix".into() });
    }
    Ok(hi / lo)
}

/// `(D(S, P), D(P, S))` on dense materializations.
pub fn divergence_columns(s: &CsrMatrix, p: &Preconditioner) -> Result<(f64, f64)> {
    check_cap(s.n_rows())?;
    let sd = s.to_dense();
    let pd = p.to_dense();
    Ok((divergence_ld(&sd, &pd)?, divergence_ld(&pd, &sd)?))
}
