//! Log-determinant divergence and the truncations it induces.
//!
//! For a symmetric error `E` with `I + E` positive definite and
//! eigenvalues `theta_j`, the rank-`r` term `W` minimizing
//! `D(I + E, I + W)` keeps the eigenpairs with the largest
//! `gamma(theta_j) = theta_j - ln(1 + theta_j)`. Swapping the arguments
//! replaces `gamma` with `nu(x) = 1/(1+x) + ln(1+x) - 1`. A truncated SVD
//! ranks by `|theta_j|` instead, which ignores the sign.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::dense::{cholesky_logdet, dense_cholesky, lower_solve_in_place, orthonormality_error, sym_eig, DenseMatrix, EigenDecomposition};
use crate::error::{Error, Result};
use crate::sparse::{CholFactor, CsrMatrix};

/// Largest order that [`scaled_error`] will densify by default.
pub const DEFAULT_DENSIFY_CAP: usize = 4096;

/// Eigenvalues this close to `-1` are treated as leaving the domain.
pub const DOMAIN_MARGIN: f64 = 1e-12;

fn check_domain(x: f64) -> Result<()> {
    if x > -1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("expected x > -1, got {x}")))
    }
}

/// `x - ln(1 + x)`.
pub fn gamma(x: f64) -> Result<f64> {
    check_domain(x)?;
    Ok(x - x.ln_1p())
}

/// `1/(1 + x) + ln(1 + x) - 1`.
pub fn nu(x: f64) -> Result<f64> {
    check_domain(x)?;
    Ok(1.0 / (1.0 + x) + x.ln_1p() - 1.0)
}

/// `D(X, Y) = tr(X Y^-1) - logdet(X Y^-1) - n` for symmetric positive
/// definite `X`, `Y`.
///
/// The trace is `||L_Y^-1 L_X||_F^2` and the log-determinants come from the
/// Cholesky diagonals; no inverse is formed.
pub fn divergence_ld(x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    if !x.is_square() {
        return Err(Error::NotSquare { rows: x.nrows(), cols: x.ncols() });
    }
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.nrows(),
        });
    }
    let n = x.nrows();
    let lx = dense_cholesky(x).map_err(|_| Error::NotPositiveDefinite { what: "first argument X".into() })?;
    let ly = dense_cholesky(y).map_err(|_| Error::NotPositiveDefinite { what: "second argument Y".into() })?;
    let mut m = lx.clone();
    lower_solve_in_place(&ly, &mut m);
    let trace = m.norm_squared();
    Ok(trace - (cholesky_logdet(&lx) - cholesky_logdet(&ly)) - n as f64)
}

/// `Q^-1 S Q^-T - I` as a dense symmetric matrix.
pub fn scaled_error(s: &CsrMatrix, q: &CholFactor, cap: usize) -> Result<DenseMatrix> {
    let n = s.n_rows();
    if !s.is_square() {
        return Err(Error::NotSquare { rows: n, cols: s.n_cols() });
    }
    if q.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: q.n() });
    }
    if n > cap {
        return Err(Error::DensifyCapExceeded { n, cap });
    }
    // Y = Q^-1 S column by column, then Q^-1 Y^T = Q^-1 S Q^-T
    let mut y = s.to_dense();
    for mut col in y.column_iter_mut() {
        q.solve_in_place(col.as_mut_slice(), false)?;
    }
    let mut e = y.transpose();
    for mut col in e.column_iter_mut() {
        q.solve_in_place(col.as_mut_slice(), false)?;
    }
    let mut e = crate::dense::symmetrize(&e);
    for i in 0..n {
        e[(i, i)] -= 1.0;
    }
    Ok(e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TruncationRule {
    /// Maximize the sum of `gamma(theta)`.
    Bld,
    /// Maximize the sum of `nu(theta)` (arguments of the divergence swapped).
    Rbld,
    /// Maximize the sum of `|theta|`.
    Tsvd,
}

impl TruncationRule {
    pub const ALL: [TruncationRule; 3] = [TruncationRule::Bld, TruncationRule::Rbld, TruncationRule::Tsvd];

    pub fn score(&self, theta: f64) -> f64 {
        match self {
            TruncationRule::Bld => theta - theta.ln_1p(),
            TruncationRule::Rbld => 1.0 / (1.0 + theta) + theta.ln_1p() - 1.0,
            TruncationRule::Tsvd => theta.abs(),
        }
    }
}

impl fmt::Display for TruncationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruncationRule::Bld => "bld",
            TruncationRule::Rbld => "rbld",
            TruncationRule::Tsvd => "tsvd",
        })
    }
}

impl FromStr for TruncationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bld" | "breg" => Ok(Self::Bld),
            "rbld" | "rbreg" => Ok(Self::Rbld),
            "tsvd" | "svd" => Ok(Self::Tsvd),
            other => Err(Error::Config(format!("unknown truncation rule '{other}'"))),
        }
    }
}

/// Positions (ascending) into a descending-sorted eigenvalue list.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(mut indices: Vec<usize>, len: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("index set has duplicates".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::Domain(format!("index {bad} out of range for {len} eigenvalues")));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Picks the `r` positions maximizing the rule's score sum. Ties go to the
/// smaller position.
pub fn select_indices(eigenvalues: &[f64], r: usize, rule: TruncationRule) -> Result<IndexSet> {
    let n = eigenvalues.len();
    if r >= n && n > 0 {
        return Err(Error::Domain(format!("rank {r} must be smaller than {n}")));
    }
    if rule != TruncationRule::Tsvd {
        if let Some((index, &value)) = eigenvalues.iter().enumerate().find(|(_, &v)| !(v > -1.0 + DOMAIN_MARGIN)) {
            return Err(Error::EigenvalueOutOfDomain { index, value });
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let scores: Vec<f64> = eigenvalues.iter().map(|&t| rule.score(t)).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(r);
    IndexSet::new(order, n)
}

/// Rank-`r` symmetric term `W = Z diag(lam) Z^T` with orthonormal `Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRank {
    z: DenseMatrix,
    lam: Vec<f64>,
}

impl LowRank {
    /// Checks shapes and `||Z^T Z - I||_max <= 1e-8`. Feasibility
    /// (`1 + lam > 0`) is checked when a preconditioner is assembled.
    pub fn new(z: DenseMatrix, lam: Vec<f64>) -> Result<Self> {
        if z.ncols() != lam.len() {
            return Err(Error::DimensionMismatch {
                expected: z.ncols(),
                found: lam.len(),
            });
        }
        if lam.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite low-rank eigenvalue".into()));
        }
        let err = orthonormality_error(&z);
        if err > 1e-8 {
            return Err(Error::Domain(format!("basis is not orthonormal (error {err:e})")));
        }
        Ok(Self { z, lam })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            z: DenseMatrix::zeros(n, 0),
            lam: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn rank(&self) -> usize {
        self.lam.len()
    }

    pub fn basis(&self) -> &DenseMatrix {
        &self.z
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lam
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut scaled = self.z.clone();
        for (j, &l) in self.lam.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l);
        }
        &scaled * self.z.transpose()
    }

    /// Index of the first eigenvalue with `1 + lam <= 0`.
    pub fn check_feasible(&self) -> Result<()> {
        match self.lam.iter().position(|&l| !(1.0 + l > 0.0)) {
            Some(index) => Err(Error::InfeasibleLowRank {
                index,
                value: self.lam[index],
            }),
            None => Ok(()),
        }
    }

    /// Sum of two terms whose bases need not be mutually orthogonal. The
    /// stacked basis is re-orthonormalized and the small core is
    /// re-diagonalized, so the result is again in eigen-form.
    pub fn combine(&self, other: &LowRank) -> Result<LowRank> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        if other.rank() == 0 {
            return Ok(self.clone());
        }
        if self.rank() == 0 {
            return Ok(other.clone());
        }
        let n = self.dim();
        let k = self.rank() + other.rank();
        let mut stacked = DMatrix::zeros(n, k);
        stacked.columns_mut(0, self.rank()).copy_from(&self.z);
        stacked.columns_mut(self.rank(), other.rank()).copy_from(&other.z);
        let lam: Vec<f64> = self.lam.iter().chain(&other.lam).copied().collect();
        let (q, r) = crate::dense::thin_qr(&stacked)?;
        let mut rd = r.clone();
        for (j, &l) in lam.iter().enumerate() {
            rd.column_mut(j).scale_mut(l);
        }
        let core = rd * r.transpose();
        let eig = sym_eig(&core)?;
        LowRank::new(q * eig.vectors, eig.values)
    }
}

/// Keeps the eigenpairs at `idx`; eigenvalues are copied unmodified.
pub fn truncate(decomp: &EigenDecomposition, idx: &IndexSet) -> Result<LowRank> {
    let n = decomp.vectors.nrows();
    if let Some(&bad) = idx.indices().iter().find(|&&i| i >= decomp.len()) {
        return Err(Error::Domain(format!("index {bad} out of range")));
    }
    let mut z = DMatrix::zeros(n, idx.len());
    let mut lam = Vec::with_capacity(idx.len());
    for (dst, &src) in idx.indices().iter().enumerate() {
        z.set_column(dst, &decomp.vectors.column(src));
        lam.push(decomp.values[src]);
    }
    LowRank::new(z, lam)
}

/// `I + M` for a square matrix.
pub fn shift_identity(m: &DenseMatrix) -> DenseMatrix {
    m + DenseMatrix::identity(m.nrows(), m.ncols())
}
