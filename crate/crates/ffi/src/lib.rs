//! C ABI over `logdet-precond`.
//!
//! Objects are opaque heap handles released with the matching `*_free`
//! function. Every fallible call returns an [`LdpStatus`]; on failure the
//! thread's last error message is available from
//! [`ldp_last_error_message`]. Dense matrices are column-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use logdet_precond::bregman::{divergence_ld, gamma, nu, TruncationRule};
use logdet_precond::dense::DenseMatrix;
use logdet_precond::eigsolve::EigsParams;
use logdet_precond::ichol::ic0;
use logdet_precond::matio::read_matrix_market;
use logdet_precond::pcg::{pcg_solve, PcgOptions, StopReason};
use logdet_precond::precond::{
    build_alpha, build_exact, build_randomized, AlphaConfig, PositivePartMethod, RandomizedVariant,
};
use logdet_precond::sketch::SketchParams;
use logdet_precond::{CholFactor, CsrMatrix, Error, Preconditioner};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LdpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    Breakdown = 5,
    Domain = 6,
    NoConvergence = 7,
    Io = 8,
    Parse = 9,
    Unsupported = 10,
    CapExceeded = 11,
    IndefinitePreconditioner = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LdpRule {
    Bld = 0,
    Rbld = 1,
    Tsvd = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LdpStopReason {
    Converged = 0,
    MaxIterations = 1,
    Stagnation = 2,
}

/// Summary of one PCG run.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct LdpSolveReport {
    pub converged: bool,
    pub reason: LdpStopReason,
    pub iterations: usize,
    /// True relative residual at termination.
    pub final_rel_residual: f64,
    pub matvecs: usize,
    pub residual_gap: bool,
    pub time_solve_s: f64,
}

/// Sparse symmetric matrix handle.
pub struct LdpMatrix {
    inner: CsrMatrix,
}

/// Incomplete Cholesky factor handle.
pub struct LdpFactor {
    inner: CholFactor,
}

/// Preconditioner handle.
pub struct LdpPreconditioner {
    inner: Preconditioner,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> LdpStatus {
    match e {
        Error::DimensionMismatch { .. } | Error::NotSquare { .. } => LdpStatus::DimensionMismatch,
        Error::InvalidMatrix(_) | Error::Config(_) => LdpStatus::InvalidArgument,
        Error::NonPositiveDiagonal { .. } | Error::NotPositiveDefinite { .. } => LdpStatus::NotPositiveDefinite,
        Error::Breakdown { .. } => LdpStatus::Breakdown,
        Error::Domain(_)
        | Error::EigenvalueOutOfDomain { .. }
        | Error::EtaTooSmall { .. }
        | Error::InfeasibleLowRank { .. } => LdpStatus::Domain,
        Error::NoConvergence { .. } | Error::RankCollapse { .. } => LdpStatus::NoConvergence,
        Error::DensifyCapExceeded { .. } => LdpStatus::CapExceeded,
        Error::IndefinitePreconditionerDetected { .. } => LdpStatus::IndefinitePreconditioner,
        Error::Parse { .. } | Error::Csv(_) => LdpStatus::Parse,
        Error::UnsupportedFormat(_) => LdpStatus::Unsupported,
        Error::Io(_) => LdpStatus::Io,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (LdpStatus, String)>) -> LdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            LdpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside logdet-precond");
            LdpStatus::Panic
        }
    }
}

fn lib<T>(r: logdet_precond::Result<T>) -> Result<T, (LdpStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (LdpStatus, String) {
    (LdpStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (LdpStatus, String) {
    (LdpStatus::InvalidArgument, msg.into())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (LdpStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (LdpStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (LdpStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), (LdpStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ldp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn ldp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a matrix from CSR arrays. `row_ptr` has `n_rows + 1` entries and
/// `row_ptr[n_rows]` is the number of stored entries.
///
/// # Safety
/// Array pointers must be valid for the lengths implied above.
#[no_mangle]
pub unsafe extern "C" fn ldp_matrix_from_csr(
    n_rows: usize,
    n_cols: usize,
    row_ptr: *const usize,
    col_idx: *const usize,
    values: *const f64,
    out: *mut *mut LdpMatrix,
) -> LdpStatus {
    guard(|| {
        let rp = slice_in(row_ptr, n_rows + 1, "row_ptr")?;
        let nnz = rp[n_rows];
        let ci = slice_in(col_idx, nnz, "col_idx")?;
        let v = slice_in(values, nnz, "values")?;
        let m = lib(CsrMatrix::new(n_rows, n_cols, rp.to_vec(), ci.to_vec(), v.to_vec()))?;
        put(out, LdpMatrix { inner: m })
    })
}

/// Reads a Matrix Market file.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ldp_matrix_read_mtx(path: *const c_char, out: *mut *mut LdpMatrix) -> LdpStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let p = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        let m = lib(read_matrix_market(p))?;
        put(out, LdpMatrix { inner: m })
    })
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ldp_matrix_n_rows(m: *const LdpMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.n_rows())
}

/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ldp_matrix_nnz(m: *const LdpMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.nnz())
}

/// # Safety
/// `m` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ldp_matrix_free(m: *mut LdpMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Zero-fill incomplete Cholesky of `S + diag_shift * diag(S)`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_ic0(m: *const LdpMatrix, diag_shift: f64, out: *mut *mut LdpFactor) -> LdpStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        let q = lib(ic0(&m.inner, diag_shift))?;
        put(out, LdpFactor { inner: q })
    })
}

/// # Safety
/// `f` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ldp_factor_free(f: *mut LdpFactor) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_precond_identity(n: usize, out: *mut *mut LdpPreconditioner) -> LdpStatus {
    guard(|| put(out, LdpPreconditioner { inner: Preconditioner::identity(n) }))
}

/// `P = Q Q^T`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_precond_factor_only(q: *const LdpFactor, out: *mut *mut LdpPreconditioner) -> LdpStatus {
    guard(|| {
        let q = deref(q, "factor")?;
        put(out, LdpPreconditioner { inner: Preconditioner::factor_only(q.inner.clone()) })
    })
}

/// Exact rank-`r` truncation of the scaled error by `rule`; densifies.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_precond_exact(
    s: *const LdpMatrix,
    q: *const LdpFactor,
    r: usize,
    rule: LdpRule,
    out: *mut *mut LdpPreconditioner,
) -> LdpStatus {
    guard(|| {
        let s = deref(s, "matrix")?;
        let q = deref(q, "factor")?;
        let rule = match rule {
            LdpRule::Bld => TruncationRule::Bld,
            LdpRule::Rbld => TruncationRule::Rbld,
            LdpRule::Tsvd => TruncationRule::Tsvd,
        };
        let p = lib(build_exact(&s.inner, &q.inner, r, rule))?;
        put(out, LdpPreconditioner { inner: p })
    })
}

/// Split-rank approximation: `floor(alpha r)` largest and the rest smallest
/// eigenpairs of the scaled error. `krylov_positive` selects Lanczos for the
/// positive part instead of Nystrom. `s_matvecs` may be null.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_precond_alpha(
    s: *const LdpMatrix,
    q: *const LdpFactor,
    r: usize,
    alpha: f64,
    krylov_positive: bool,
    seed: u64,
    out: *mut *mut LdpPreconditioner,
    s_matvecs: *mut usize,
) -> LdpStatus {
    guard(|| {
        let s = deref(s, "matrix")?;
        let q = deref(q, "factor")?;
        let n = s.inner.n_rows();
        let small = (r as f64) < 0.005 * n as f64;
        let eig = if small { EigsParams::small_rank() } else { EigsParams::large_rank() };
        let config = AlphaConfig {
            eig: eig.with_seed(seed),
            sketch: SketchParams { seed, ..SketchParams::default() },
            positive_method: if krylov_positive {
                PositivePartMethod::KrylovSchur
            } else {
                PositivePartMethod::Nystrom
            },
        };
        let c = lib(build_alpha(&s.inner, &q.inner, r, alpha, &config))?;
        if !s_matvecs.is_null() {
            *s_matvecs = c.s_matvecs;
        }
        put(out, LdpPreconditioner { inner: c.preconditioner })
    })
}

/// Nystrom (`indefinite = false`) or indefinite Nystrom approximation.
///
/// # Safety
/// Handles must be live; `out` must be writable. `s_matvecs` may be null.
#[no_mangle]
pub unsafe extern "C" fn ldp_precond_randomized(
    s: *const LdpMatrix,
    q: *const LdpFactor,
    r: usize,
    indefinite: bool,
    seed: u64,
    out: *mut *mut LdpPreconditioner,
    s_matvecs: *mut usize,
) -> LdpStatus {
    guard(|| {
        let s = deref(s, "matrix")?;
        let q = deref(q, "factor")?;
        let variant = if indefinite {
            RandomizedVariant::NystromIndefinite
        } else {
            RandomizedVariant::Nystrom
        };
        let params = SketchParams { seed, ..SketchParams::default() };
        let c = lib(build_randomized(&s.inner, &q.inner, r, variant, &params))?;
        if !s_matvecs.is_null() {
            *s_matvecs = c.s_matvecs;
        }
        put(out, LdpPreconditioner { inner: c.preconditioner })
    })
}

/// # Safety
/// `p` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ldp_precond_rank(p: *const LdpPreconditioner) -> usize {
    p.as_ref().map_or(0, |p| p.inner.rank())
}

/// `out = P^-1 v`, both of length `n`.
///
/// # Safety
/// `v` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ldp_precond_apply_inverse(
    p: *const LdpPreconditioner,
    v: *const f64,
    out: *mut f64,
    n: usize,
) -> LdpStatus {
    guard(|| {
        let p = deref(p, "preconditioner")?;
        let v = slice_in(v, n, "v")?;
        let out = slice_out(out, n, "out")?;
        lib(p.inner.apply_inverse_into(v, out))
    })
}

/// # Safety
/// `p` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ldp_precond_free(p: *mut LdpPreconditioner) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// PCG from a zero initial guess. `x` receives the iterate; `report` may be
/// null.
///
/// # Safety
/// `b` and `x` must hold `n` doubles; handles must be live.
#[no_mangle]
pub unsafe extern "C" fn ldp_pcg_solve(
    s: *const LdpMatrix,
    p: *const LdpPreconditioner,
    b: *const f64,
    x: *mut f64,
    n: usize,
    tol: f64,
    maxit: usize,
    report: *mut LdpSolveReport,
) -> LdpStatus {
    guard(|| {
        let s = deref(s, "matrix")?;
        let p = deref(p, "preconditioner")?;
        let b = slice_in(b, n, "b")?;
        let x = slice_out(x, n, "x")?;
        if !(tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        let (sol, rep) = lib(pcg_solve(&s.inner, b, &p.inner, &PcgOptions { tol, maxit }))?;
        x.copy_from_slice(&sol);
        if !report.is_null() {
            *report = LdpSolveReport {
                converged: rep.converged,
                reason: match rep.reason {
                    StopReason::Converged => LdpStopReason::Converged,
                    StopReason::MaxIterations => LdpStopReason::MaxIterations,
                    StopReason::Stagnation => LdpStopReason::Stagnation,
                },
                iterations: rep.iterations,
                final_rel_residual: rep.final_rel_residual,
                matvecs: rep.matvecs_s,
                residual_gap: rep.residual_gap,
                time_solve_s: rep.time_solve_s,
            };
        }
        Ok(())
    })
}

/// `x - ln(1 + x)` for `x > -1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_gamma(x: f64, out: *mut f64) -> LdpStatus {
    guard(|| {
        let v = lib(gamma(x))?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// `1 / (1 + x) + ln(1 + x) - 1` for `x > -1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_nu(x: f64, out: *mut f64) -> LdpStatus {
    guard(|| {
        let v = lib(nu(x))?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Log-determinant divergence of two dense `n x n` SPD matrices.
///
/// # Safety
/// `x` and `y` must hold `n * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldp_divergence(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> LdpStatus {
    guard(|| {
        let x = DenseMatrix::from_column_slice(n, n, slice_in(x, n * n, "x")?);
        let y = DenseMatrix::from_column_slice(n, n, slice_in(y, n * n, "y")?);
        let v = lib(divergence_ld(&x, &y))?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}
