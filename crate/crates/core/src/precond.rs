//! Preconditioners of the form `P = Q (I + W) Q^T`.
//!
//! `Q` is an approximate Cholesky factor and `W = Z diag(lam) Z^T` a
//! low-rank correction with orthonormal `Z`. The inverse is applied with
//! two triangular solves and the Woodbury identity
//! `(I + Z diag(lam) Z^T)^-1 = I - Z diag(lam / (1 + lam)) Z^T`.

use std::fmt;
use std::str::FromStr;

use crate::bregman::{scaled_error, select_indices, truncate, IndexSet, LowRank, TruncationRule};
use crate::dense::{sym_eig, DenseMatrix, EigenDecomposition};
use crate::eigsolve::{
    lanczos_tr, lanczos_tr_which, negative_from_estimate, positive_from_estimate, shift_from_ritz, EigenEstimate,
    EigsParams, SandwichOperator, Which,
};
use crate::error::{Error, Result};
use crate::sketch::{nystrom, nystrom_indefinite, SketchParams};
use crate::sparse::{CholFactor, CsrMatrix};

/// Rank budget split `r = r_plus + r_minus` with `r_plus = floor(alpha r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaSplit {
    pub alpha: f64,
    pub r: usize,
    pub r_plus: usize,
    pub r_minus: usize,
}

pub fn split_rank(r: usize, alpha: f64) -> Result<AlphaSplit> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let r_plus = ((alpha * r as f64).floor() as usize).min(r);
    Ok(AlphaSplit {
        alpha,
        r,
        r_plus,
        r_minus: r - r_plus,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreconditionerKind {
    Identity,
    FactorOnly,
    FactorPlusLowRank,
}

#[derive(Clone, Debug)]
pub struct Preconditioner {
    kind: PreconditionerKind,
    n: usize,
    q: Option<CholFactor>,
    w: Option<LowRank>,
    woodbury_diag: Vec<f64>,
}

impl Preconditioner {
    pub fn identity(n: usize) -> Self {
        Self {
            kind: PreconditionerKind::Identity,
            n,
            q: None,
            w: None,
            woodbury_diag: Vec::new(),
        }
    }

    pub fn factor_only(q: CholFactor) -> Self {
        Self {
            kind: PreconditionerKind::FactorOnly,
            n: q.n(),
            q: Some(q),
            w: None,
            woodbury_diag: Vec::new(),
        }
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor(&self) -> Option<&CholFactor> {
        self.q.as_ref()
    }

    pub fn low_rank(&self) -> Option<&LowRank> {
        self.w.as_ref()
    }

    pub fn rank(&self) -> usize {
        self.w.as_ref().map_or(0, LowRank::rank)
    }

    /// `lam_i / (1 + lam_i)`.
    pub fn woodbury_diag(&self) -> &[f64] {
        &self.woodbury_diag
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.apply_inverse_into(v, &mut out)?;
        Ok(out)
    }

    /// `out = Q^-T (I - Z diag(d) Z^T) Q^-1 v`.
    pub fn apply_inverse_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        if v.len() != self.n || out.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: if v.len() != self.n { v.len() } else { out.len() },
            });
        }
        out.copy_from_slice(v);
        let Some(q) = &self.q else {
            return Ok(());
        };
        q.solve_in_place(out, false)?;
        if let Some(w) = &self.w {
            let z = w.basis();
            let y = nalgebra::DVectorView::from_slice(out, self.n);
            let mut t = z.tr_mul(&y);
            for (ti, &d) in t.iter_mut().zip(&self.woodbury_diag) {
                *ti *= d;
            }
            let mut y = nalgebra::DVectorViewMut::from_slice(out, self.n);
            y.gemv(-1.0, z, &t, 1.0);
        }
        q.solve_in_place(out, true)?;
        Ok(())
    }

    /// Dense `Q (I + W) Q^T`.
    pub fn to_dense(&self) -> DenseMatrix {
        let Some(q) = &self.q else {
            return DenseMatrix::identity(self.n, self.n);
        };
        let qd = q.to_dense();
        let mut middle = DenseMatrix::identity(self.n, self.n);
        if let Some(w) = &self.w {
            middle += w.to_dense();
        }
        &qd * middle * qd.transpose()
    }
}

/// Validates `1 + lam > 0` and precomputes the Woodbury diagonal. An absent
/// or rank-zero `W` gives a factor-only preconditioner.
#[cfg(test)]
pub(crate) fn set_woodbury_diag_for_tests(p: &mut Preconditioner, d: Vec<f64>) {
    p.woodbury_diag = d;
}

pub fn assemble(q: CholFactor, w: Option<LowRank>) -> Result<Preconditioner> {
    let Some(w) = w.filter(|w| w.rank() > 0) else {
        return Ok(Preconditioner::factor_only(q));
    };
    if w.dim() != q.n() {
        return Err(Error::DimensionMismatch {
            expected: q.n(),
            found: w.dim(),
        });
    }
    w.check_feasible()?;
    let woodbury_diag = w.eigenvalues().iter().map(|&l| l / (1.0 + l)).collect();
    Ok(Preconditioner {
        kind: PreconditionerKind::FactorPlusLowRank,
        n: q.n(),
        q: Some(q),
        w: Some(w),
        woodbury_diag,
    })
}

/// Dense eigendecomposition of the scaled error, shared by every exact
/// truncation of the same `(S, Q)` pair.
#[derive(Clone, Debug)]
pub struct ExactSpectrum {
    pub decomp: EigenDecomposition,
}

impl ExactSpectrum {
    pub fn compute(s: &CsrMatrix, q: &CholFactor, cap: usize) -> Result<Self> {
        let e = scaled_error(s, q, cap)?;
        Ok(Self { decomp: sym_eig(&e)? })
    }

    pub fn values(&self) -> &[f64] {
        &self.decomp.values
    }

    pub fn index_set(&self, r: usize, rule: TruncationRule) -> Result<IndexSet> {
        select_indices(&self.decomp.values, r, rule)
    }

    pub fn truncation(&self, r: usize, rule: TruncationRule) -> Result<LowRank> {
        truncate(&self.decomp, &self.index_set(r, rule)?)
    }

    pub fn preconditioner(&self, q: &CholFactor, r: usize, rule: TruncationRule) -> Result<Preconditioner> {
        assemble(q.clone(), Some(self.truncation(r, rule)?))
    }
}

/// Exact (dense) truncation of the scaled error by `rule`, then assembly.
pub fn build_exact(s: &CsrMatrix, q: &CholFactor, r: usize, rule: TruncationRule) -> Result<Preconditioner> {
    ExactSpectrum::compute(s, q, crate::bregman::DEFAULT_DENSIFY_CAP)?.preconditioner(q, r, rule)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PositivePartMethod {
    KrylovSchur,
    #[default]
    Nystrom,
}

impl FromStr for PositivePartMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "krylov_schur" | "ks" | "lanczos" => Ok(Self::KrylovSchur),
            "nystrom" | "nys" => Ok(Self::Nystrom),
            other => Err(Error::Config(format!("unknown positive-part method '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaConfig {
    pub eig: EigsParams,
    pub sketch: SketchParams,
    pub positive_method: PositivePartMethod,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self {
            eig: EigsParams::default(),
            sketch: SketchParams::default(),
            positive_method: PositivePartMethod::default(),
        }
    }
}

/// Outcome of an approximate construction: the preconditioner plus the
/// bookkeeping the benchmark tables report.
#[derive(Clone, Debug)]
pub struct Construction {
    pub preconditioner: Preconditioner,
    /// Products with `S` spent building the low-rank term.
    pub s_matvecs: usize,
    /// False when an eigensolve stopped early and its partial result was used.
    pub eig_converged: bool,
    pub eta: Option<f64>,
    pub notes: Vec<String>,
}

/// Runs an eigensolve and, on `NoConvergence`, falls back to the partial
/// estimate so construction can proceed.
fn tolerate_partial(result: Result<EigenEstimate>, label: &str, notes: &mut Vec<String>) -> Result<(EigenEstimate, bool)> {
    match result {
        Ok(est) => Ok((est, true)),
        Err(Error::NoConvergence { converged, wanted, partial }) => {
            notes.push(format!("{label}: {converged}/{wanted} eigenpairs converged"));
            Ok((*partial, false))
        }
        Err(e) => Err(e),
    }
}

/// `Q (I + E_plus + E_minus) Q^T` where `E_plus` approximates the
/// `floor(alpha r)` largest eigenpairs of the scaled error and `E_minus` the
/// remaining smallest ones (through the reflected operator).
///
/// Non-converged eigensolves are tolerated: their partial Ritz pairs are used
/// and `eig_converged` is cleared.
pub fn build_alpha(s: &CsrMatrix, q: &CholFactor, r: usize, alpha: f64, config: &AlphaConfig) -> Result<Construction> {
    let split = split_rank(r, alpha)?;
    let n = s.n_rows();
    let mut notes = Vec::new();
    let mut all_converged = true;
    let mut s_matvecs = 0usize;
    let mut top_ritz: Option<(f64, f64)> = None;

    let positive = if split.r_plus == 0 {
        LowRank::empty(n)
    } else {
        match config.positive_method {
            PositivePartMethod::KrylovSchur => {
                let op = SandwichOperator::new(s, q)?;
                let (est, ok) = tolerate_partial(lanczos_tr(&op, split.r_plus, &config.eig), "positive part", &mut notes)?;
                all_converged &= ok;
                s_matvecs += op.s_matvecs();
                top_ritz = est.values.first().map(|&v| (v, est.residual_norms[0]));
                positive_from_estimate(&est)?
            }
            PositivePartMethod::Nystrom => {
                let op = SandwichOperator::scaled_error(s, q)?;
                let w = match nystrom(&op, split.r_plus, &config.sketch) {
                    Ok(w) => w,
                    Err(Error::RankCollapse { achieved, requested, partial }) => {
                        notes.push(format!("positive part: sketch rank {achieved}/{requested}"));
                        *partial
                    }
                    Err(e) => return Err(e),
                };
                s_matvecs += op.s_matvecs();
                w
            }
        }
    };

    let mut eta = None;
    let negative = if split.r_minus == 0 {
        LowRank::empty(n)
    } else {
        let (value, residual) = match top_ritz {
            Some(top) => top,
            None => {
                let op = SandwichOperator::new(s, q)?;
                let (est, ok) = tolerate_partial(lanczos_tr(&op, 1, &config.eig), "shift estimate", &mut notes)?;
                all_converged &= ok;
                s_matvecs += op.s_matvecs();
                (est.values[0], est.residual_norms[0])
            }
        };
        let shift = shift_from_ritz(value, residual);
        eta = Some(shift);
        let op = SandwichOperator::reflected(s, q, shift)?;
        let (est, ok) = tolerate_partial(lanczos_tr(&op, split.r_minus, &config.eig), "negative part", &mut notes)?;
        all_converged &= ok;
        s_matvecs += op.s_matvecs();
        negative_from_estimate(&est, shift)?
    };

    let w = positive.combine(&negative)?;
    Ok(Construction {
        preconditioner: assemble(q.clone(), Some(w))?,
        s_matvecs,
        eig_converged: all_converged,
        eta,
        notes,
    })
}

/// `Q (I + W) Q^T` with `W` the `r` largest-magnitude Ritz pairs of the
/// scaled error, i.e. a Krylov approximation of its truncated SVD.
pub fn build_svd_ks(s: &CsrMatrix, q: &CholFactor, r: usize, params: &EigsParams) -> Result<Construction> {
    let op = SandwichOperator::scaled_error(s, q)?;
    let mut notes = Vec::new();
    let (est, ok) = tolerate_partial(lanczos_tr_which(&op, r, params, Which::LargestMagnitude), "svd_ks", &mut notes)?;
    let w = LowRank::new(est.vectors, est.values)?;
    Ok(Construction {
        preconditioner: assemble(q.clone(), Some(w))?,
        s_matvecs: op.s_matvecs(),
        eig_converged: ok,
        eta: None,
        notes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomizedVariant {
    Nystrom,
    NystromIndefinite,
}

/// Sketch-based low-rank term of the scaled error. Infeasible outputs
/// (`1 + lam <= 0`) are reported as errors rather than repaired.
pub fn build_randomized(
    s: &CsrMatrix,
    q: &CholFactor,
    r: usize,
    variant: RandomizedVariant,
    params: &SketchParams,
) -> Result<Construction> {
    let op = SandwichOperator::scaled_error(s, q)?;
    let mut notes = Vec::new();
    let result = match variant {
        RandomizedVariant::Nystrom => nystrom(&op, r, params),
        RandomizedVariant::NystromIndefinite => nystrom_indefinite(&op, r, params),
    };
    let w = match result {
        Ok(w) => w,
        Err(Error::RankCollapse { achieved, requested, partial }) => {
            notes.push(format!("sketch rank {achieved}/{requested}"));
            *partial
        }
        Err(e) => return Err(e),
    };
    Ok(Construction {
        preconditioner: assemble(q.clone(), Some(w))?,
        s_matvecs: op.s_matvecs(),
        eig_converged: true,
        eta: None,
        notes,
    })
}

/// Every preconditioner the benchmark harness knows about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrecondChoice {
    None,
    Ichol,
    Svd,
    Breg,
    Rbreg,
    SvdKs,
    Nys,
    NysIndef,
    BregAlpha,
}

impl PrecondChoice {
    pub const ALL: [PrecondChoice; 9] = [
        PrecondChoice::None,
        PrecondChoice::Ichol,
        PrecondChoice::Svd,
        PrecondChoice::Breg,
        PrecondChoice::Rbreg,
        PrecondChoice::SvdKs,
        PrecondChoice::Nys,
        PrecondChoice::NysIndef,
        PrecondChoice::BregAlpha,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PrecondChoice::None => "none",
            PrecondChoice::Ichol => "ichol",
            PrecondChoice::Svd => "svd",
            PrecondChoice::Breg => "breg",
            PrecondChoice::Rbreg => "rbreg",
            PrecondChoice::SvdKs => "svd_ks",
            PrecondChoice::Nys => "nys",
            PrecondChoice::NysIndef => "nys_indef",
            PrecondChoice::BregAlpha => "breg_alpha",
        }
    }

    pub fn uses_rank(&self) -> bool {
        !matches!(self, PrecondChoice::None | PrecondChoice::Ichol)
    }

    pub fn exact_rule(&self) -> Option<TruncationRule> {
        match self {
            PrecondChoice::Svd => Some(TruncationRule::Tsvd),
            PrecondChoice::Breg => Some(TruncationRule::Bld),
            PrecondChoice::Rbreg => Some(TruncationRule::Rbld),
            _ => None,
        }
    }
}

impl fmt::Display for PrecondChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecondChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown preconditioner '{s}'")))
    }
}
