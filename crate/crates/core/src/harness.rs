//! Experiment grids over Matrix Market inputs, written as CSV.
//!
//! The small suite mirrors a wide table layout: one row per `(matrix, r)`
//! with iteration counts, condition numbers and divergences of the exact
//! truncations. The large suite is long format: one row per
//! `(matrix, preconditioner, r, alpha)` with timings and `S` product counts.
//! Timing columns are wall-clock and are the only non-reproducible fields.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bregman::{gamma, nu, TruncationRule, DEFAULT_DENSIFY_CAP};
use crate::eigsolve::EigsParams;
use crate::error::{Error, Result};
use crate::ichol::ic0;
use crate::matio::{ProblemInstance, RhsMode};
use crate::pcg::{cond2_preconditioned, divergence_columns, pcg_solve, PcgOptions, SolveReport};
use crate::precond::{
    build_alpha, build_randomized, build_svd_ks, AlphaConfig, ExactSpectrum, PositivePartMethod, PrecondChoice,
    Preconditioner, RandomizedVariant,
};
use crate::rng::derive_seed;
use crate::sketch::SketchParams;
use crate::sparse::{CholFactor, CsrMatrix};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "LDPRECOND_THREADS";

/// Fractions below this use the smaller eigensolver budget.
const LARGE_RANK_THRESHOLD: f64 = 0.005;

const RHS_SALT: u64 = 1;
const EIG_SALT: u64 = 2;
const SKETCH_SALT: u64 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    #[default]
    Small,
    Large,
}

impl Suite {
    pub fn default_rank_fractions(&self) -> Vec<f64> {
        match self {
            Suite::Small => vec![0.01, 0.05, 0.1],
            Suite::Large => vec![0.0025, 0.0075],
        }
    }

    pub fn default_pcg(&self) -> PcgOptions {
        match self {
            Suite::Small => PcgOptions::small_suite(),
            Suite::Large => PcgOptions::large_suite(),
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Suite::Small),
            "large" => Ok(Suite::Large),
            other => Err(Error::Config(format!("unknown suite '{other}'"))),
        }
    }
}

/// Benchmark configuration, usually read from a TOML file.
///
/// ```toml
/// suite = "large"
/// matrix_paths = ["data/bcsstk08.mtx"]
/// rank_fractions = [0.0025]
/// alphas = [0.0, 0.5, 1.0]
/// preconditioners = ["ichol", "nys", "breg_alpha"]
/// seed = 7
/// ```
///
/// Unset optional fields take the suite defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub matrix_paths: Vec<PathBuf>,
    pub suite: Suite,
    pub rank_fractions: Option<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// Large suite only; the small suite always reports its fixed layout.
    pub preconditioners: Option<Vec<String>>,
    pub tol: Option<f64>,
    pub maxit: Option<usize>,
    pub eig_tol: Option<f64>,
    pub eig_max_restarts: Option<usize>,
    pub eig_slack: Option<usize>,
    pub sketch_oversample_add: Option<usize>,
    pub sketch_oversample_mul: Option<f64>,
    pub seed: u64,
    /// Positive part of `breg_alpha` by Lanczos instead of Nystrom.
    pub appendix_mode: bool,
    pub rhs_mode: RhsMode,
    pub diag_shift: f64,
    pub densify_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            matrix_paths: Vec::new(),
            suite: Suite::Small,
            rank_fractions: None,
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            preconditioners: None,
            tol: None,
            maxit: None,
            eig_tol: None,
            eig_max_restarts: None,
            eig_slack: None,
            sketch_oversample_add: None,
            sketch_oversample_mul: None,
            seed: 0,
            appendix_mode: false,
            rhs_mode: RhsMode::Random,
            diag_shift: 0.0,
            densify_cap: DEFAULT_DENSIFY_CAP,
        }
    }
}

impl ExperimentConfig {
    pub fn for_suite(suite: Suite) -> Self {
        Self { suite, ..Self::default() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        // relative matrix paths are resolved against the config's directory
        if let Some(dir) = path.parent() {
            for p in &mut cfg.matrix_paths {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for &f in &self.rank_fractions() {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("rank fraction {f} outside (0, 1)")));
            }
        }
        for &a in &self.alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
            }
        }
        self.preconditioner_list()?;
        if self.tol.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.diag_shift >= 0.0) {
            return Err(Error::Config("diag_shift must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn rank_fractions(&self) -> Vec<f64> {
        self.rank_fractions.clone().unwrap_or_else(|| self.suite.default_rank_fractions())
    }

    pub fn preconditioner_list(&self) -> Result<Vec<PrecondChoice>> {
        match &self.preconditioners {
            None => Ok(match self.suite {
                Suite::Small => vec![
                    PrecondChoice::None,
                    PrecondChoice::Ichol,
                    PrecondChoice::Rbreg,
                    PrecondChoice::Svd,
                    PrecondChoice::Breg,
                ],
                Suite::Large => vec![
                    PrecondChoice::None,
                    PrecondChoice::Ichol,
                    PrecondChoice::Nys,
                    PrecondChoice::NysIndef,
                    PrecondChoice::SvdKs,
                    PrecondChoice::BregAlpha,
                ],
            }),
            Some(list) => list.iter().map(|s| s.parse()).collect(),
        }
    }

    pub fn pcg_options(&self) -> PcgOptions {
        let d = self.suite.default_pcg();
        PcgOptions {
            tol: self.tol.unwrap_or(d.tol),
            maxit: self.maxit.unwrap_or(d.maxit),
        }
    }

    /// Eigensolver budget for a rank fraction, with overrides applied.
    pub fn eig_params(&self, fraction: f64) -> EigsParams {
        let base = if fraction < LARGE_RANK_THRESHOLD {
            EigsParams::small_rank()
        } else {
            EigsParams::large_rank()
        };
        EigsParams {
            max_restarts: self.eig_max_restarts.unwrap_or(base.max_restarts),
            tol: self.eig_tol.unwrap_or(base.tol),
            slack: self.eig_slack.unwrap_or(base.slack),
            seed: derive_seed(self.seed, EIG_SALT),
        }
    }

    pub fn sketch_params(&self) -> SketchParams {
        let base = SketchParams::default();
        SketchParams {
            oversample_add: self.sketch_oversample_add.unwrap_or(base.oversample_add),
            oversample_mul: self.sketch_oversample_mul.unwrap_or(base.oversample_mul),
            seed: derive_seed(self.seed, SKETCH_SALT),
        }
    }

    pub fn alpha_config(&self, fraction: f64) -> AlphaConfig {
        AlphaConfig {
            eig: self.eig_params(fraction),
            sketch: self.sketch_params(),
            positive_method: if self.appendix_mode {
                PositivePartMethod::KrylovSchur
            } else {
                PositivePartMethod::Nystrom
            },
        }
    }

    pub fn rhs_seed(&self) -> u64 {
        derive_seed(self.seed, RHS_SALT)
    }

    pub fn load_problem(&self, path: &Path) -> Result<ProblemInstance> {
        ProblemInstance::load(path, self.rhs_mode, self.rhs_seed())
    }
}

/// `floor(n * fraction)`.
pub fn rank_for(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).floor() as usize
}

/// A preconditioner plus what it cost to build.
#[derive(Clone, Debug)]
pub struct Built {
    pub preconditioner: Preconditioner,
    pub s_matvecs: usize,
    pub eig_converged: bool,
    pub construct_s: f64,
    pub notes: Vec<String>,
}

/// Builds any preconditioner variant from a (possibly precomputed) factor.
/// Exact variants densify the scaled error and respect `densify_cap`.
pub fn build_preconditioner(
    choice: PrecondChoice,
    s: &CsrMatrix,
    q: Option<&CholFactor>,
    r: usize,
    alpha: f64,
    fraction: f64,
    config: &ExperimentConfig,
) -> Result<Built> {
    let start = Instant::now();
    let n = s.n_rows();
    if choice == PrecondChoice::None {
        return Ok(Built {
            preconditioner: Preconditioner::identity(n),
            s_matvecs: 0,
            eig_converged: true,
            construct_s: 0.0,
            notes: Vec::new(),
        });
    }
    let owned;
    let q = match q {
        Some(q) => q,
        None => {
            owned = ic0(s, config.diag_shift)?;
            &owned
        }
    };
    let construction = match choice {
        PrecondChoice::None => unreachable!(),
        PrecondChoice::Ichol => {
            return Ok(Built {
                preconditioner: Preconditioner::factor_only(q.clone()),
                s_matvecs: 0,
                eig_converged: true,
                construct_s: start.elapsed().as_secs_f64(),
                notes: Vec::new(),
            })
        }
        PrecondChoice::Svd | PrecondChoice::Breg | PrecondChoice::Rbreg => {
            let rule = choice.exact_rule().expect("exact variant");
            let p = ExactSpectrum::compute(s, q, config.densify_cap)?.preconditioner(q, r, rule)?;
            return Ok(Built {
                preconditioner: p,
                s_matvecs: 0,
                eig_converged: true,
                construct_s: start.elapsed().as_secs_f64(),
                notes: Vec::new(),
            });
        }
        PrecondChoice::SvdKs => build_svd_ks(s, q, r, &config.eig_params(fraction))?,
        PrecondChoice::Nys => build_randomized(s, q, r, RandomizedVariant::Nystrom, &config.sketch_params())?,
        PrecondChoice::NysIndef => {
            build_randomized(s, q, r, RandomizedVariant::NystromIndefinite, &config.sketch_params())?
        }
        PrecondChoice::BregAlpha => build_alpha(s, q, r, alpha, &config.alpha_config(fraction))?,
    };
    Ok(Built {
        preconditioner: construction.preconditioner,
        s_matvecs: construction.s_matvecs,
        eig_converged: construction.eig_converged,
        construct_s: start.elapsed().as_secs_f64(),
        notes: construction.notes,
    })
}

/// Builds and solves once; the report carries label, rank and timings.
pub fn solve_with(
    problem: &ProblemInstance,
    choice: PrecondChoice,
    r: usize,
    alpha: f64,
    fraction: f64,
    config: &ExperimentConfig,
) -> Result<(SolveReport, Built)> {
    let built = build_preconditioner(choice, &problem.s, None, r, alpha, fraction, config)?;
    let (_, mut report) = pcg_solve(&problem.s, &problem.b, &built.preconditioner, &config.pcg_options())?;
    report.time_construct_s = built.construct_s;
    report.preconditioner_label = choice.to_string();
    report.r = choice.uses_rank().then_some(r);
    report.alpha = (choice == PrecondChoice::BregAlpha).then_some(alpha);
    Ok((report, built))
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn iteration_cell(report: &Result<SolveReport>) -> String {
    match report {
        Ok(r) if r.converged => r.iterations.to_string(),
        _ => "-".to_string(),
    }
}

fn join_notes(notes: impl IntoIterator<Item = String>) -> String {
    notes.into_iter().filter(|s| !s.is_empty()).collect::<Vec<_>>().join("; ")
}

// ---------------------------------------------------------------- small suite

pub const SMALL_HEADER: [&str; 23] = [
    "matrix",
    "n",
    "nnz",
    "r",
    "eps",
    "iter_none",
    "iter_ichol",
    "iter_rbreg",
    "iter_svd",
    "iter_breg",
    "kappa_rbreg",
    "kappa_svd",
    "kappa_breg",
    "dld_rbreg",
    "dld_svd",
    "dld_breg",
    "dld_rev_rbreg",
    "dagger_rbreg",
    "dagger_svd",
    "dagger_breg",
    "x0",
    "notes",
    "error",
];

/// One row of the small suite. Iteration cells hold `-` when the solve did
/// not reach the tolerance; dagger flags mark truncations that coincide with
/// another one of the three.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SmallRow {
    pub matrix: String,
    pub n: Option<usize>,
    pub nnz: Option<usize>,
    pub r: Option<usize>,
    pub eps: f64,
    pub iter_none: String,
    pub iter_ichol: String,
    pub iter_rbreg: String,
    pub iter_svd: String,
    pub iter_breg: String,
    pub kappa_rbreg: Option<f64>,
    pub kappa_svd: Option<f64>,
    pub kappa_breg: Option<f64>,
    pub dld_rbreg: Option<f64>,
    pub dld_svd: Option<f64>,
    pub dld_breg: Option<f64>,
    pub dld_rev_rbreg: Option<f64>,
    pub dagger_rbreg: bool,
    pub dagger_svd: bool,
    pub dagger_breg: bool,
    pub x0: &'static str,
    pub notes: String,
    pub error: String,
}

struct ExactOutcome {
    report: Result<SolveReport>,
    kappa: Option<f64>,
    dld: Option<(f64, f64)>,
    notes: Vec<String>,
}

fn run_exact(
    problem: &ProblemInstance,
    q: &CholFactor,
    spectrum: &ExactSpectrum,
    r: usize,
    rule: TruncationRule,
    opts: &PcgOptions,
) -> ExactOutcome {
    let p = match spectrum.preconditioner(q, r, rule) {
        Ok(p) => p,
        Err(e) => {
            return ExactOutcome {
                report: Err(Error::Config(e.to_string())),
                kappa: None,
                dld: None,
                notes: vec![format!("{rule}: {e}")],
            }
        }
    };
    let mut notes = Vec::new();
    let report = pcg_solve(&problem.s, &problem.b, &p, opts).map(|(_, r)| r);
    match &report {
        Ok(rep) if !rep.converged => notes.push(format!("{rule}: {}", rep.reason.as_str())),
        Err(e) => notes.push(format!("{rule}: {e}")),
        _ => {}
    }
    let kappa = cond2_preconditioned(&problem.s, &p)
        .map_err(|e| notes.push(format!("{rule} kappa: {e}")))
        .ok();
    let dld = divergence_columns(&problem.s, &p)
        .map_err(|e| notes.push(format!("{rule} divergence: {e}")))
        .ok();
    ExactOutcome {
        report,
        kappa,
        dld,
        notes,
    }
}

fn small_rows_for(problem: &ProblemInstance, config: &ExperimentConfig) -> Vec<SmallRow> {
    let n = problem.n();
    let opts = config.pcg_options();
    let fractions = config.rank_fractions();
    let base = |eps: f64| SmallRow {
        matrix: problem.name.clone(),
        n: Some(n),
        nnz: Some(problem.s.nnz()),
        r: Some(rank_for(n, eps)),
        eps,
        x0: "zero",
        ..SmallRow::default()
    };

    let none = pcg_solve(&problem.s, &problem.b, &Preconditioner::identity(n), &opts).map(|(_, r)| r);
    let q = match ic0(&problem.s, config.diag_shift) {
        Ok(q) => q,
        Err(e) => {
            return fractions
                .iter()
                .map(|&eps| SmallRow {
                    iter_none: iteration_cell(&none),
                    iter_ichol: "-".into(),
                    iter_rbreg: "-".into(),
                    iter_svd: "-".into(),
                    iter_breg: "-".into(),
                    error: format!("ichol: {e}"),
                    ..base(eps)
                })
                .collect()
        }
    };
    let ichol = pcg_solve(&problem.s, &problem.b, &Preconditioner::factor_only(q.clone()), &opts).map(|(_, r)| r);
    let spectrum = match ExactSpectrum::compute(&problem.s, &q, config.densify_cap) {
        Ok(s) => s,
        Err(e) => {
            return fractions
                .iter()
                .map(|&eps| SmallRow {
                    iter_none: iteration_cell(&none),
                    iter_ichol: iteration_cell(&ichol),
                    iter_rbreg: "-".into(),
                    iter_svd: "-".into(),
                    iter_breg: "-".into(),
                    error: format!("spectrum: {e}"),
                    ..base(eps)
                })
                .collect()
        }
    };

    fractions
        .par_iter()
        .map(|&eps| {
            let r = rank_for(n, eps);
            let rb = run_exact(problem, &q, &spectrum, r, TruncationRule::Rbld, &opts);
            let sv = run_exact(problem, &q, &spectrum, r, TruncationRule::Tsvd, &opts);
            let br = run_exact(problem, &q, &spectrum, r, TruncationRule::Bld, &opts);
            let sets: Vec<Option<Vec<usize>>> = [TruncationRule::Rbld, TruncationRule::Tsvd, TruncationRule::Bld]
                .iter()
                .map(|&rule| spectrum.index_set(r, rule).ok().map(|s| s.indices().to_vec()))
                .collect();
            let coincides = |i: usize| {
                sets[i].is_some() && (0..3).any(|j| j != i && sets[j].is_some() && sets[j] == sets[i])
            };
            let mut notes = Vec::new();
            if let Ok(rep) = &none {
                if !rep.converged {
                    notes.push(format!("none: {}", rep.reason.as_str()));
                }
            }
            if let Ok(rep) = &ichol {
                if !rep.converged {
                    notes.push(format!("ichol: {}", rep.reason.as_str()));
                }
            }
            let errors = [&none, &ichol]
                .iter()
                .zip(["none", "ichol"])
                .filter_map(|(r, l)| r.as_ref().err().map(|e| format!("{l}: {e}")))
                .collect::<Vec<_>>();
            notes.extend(rb.notes.iter().cloned());
            notes.extend(sv.notes.iter().cloned());
            notes.extend(br.notes.iter().cloned());
            SmallRow {
                iter_none: iteration_cell(&none),
                iter_ichol: iteration_cell(&ichol),
                iter_rbreg: iteration_cell(&rb.report),
                iter_svd: iteration_cell(&sv.report),
                iter_breg: iteration_cell(&br.report),
                kappa_rbreg: rb.kappa,
                kappa_svd: sv.kappa,
                kappa_breg: br.kappa,
                dld_rbreg: rb.dld.map(|d| d.0),
                dld_svd: sv.dld.map(|d| d.0),
                dld_breg: br.dld.map(|d| d.0),
                dld_rev_rbreg: rb.dld.map(|d| d.1),
                dagger_rbreg: coincides(0),
                dagger_svd: coincides(1),
                dagger_breg: coincides(2),
                notes: join_notes(notes),
                error: join_notes(errors),
                ..base(eps)
            }
        })
        .collect()
}

/// Small suite over already loaded problems, in input order.
pub fn run_small_suite_on(problems: &[ProblemInstance], config: &ExperimentConfig) -> Vec<SmallRow> {
    with_pool(|| {
        problems
            .par_iter()
            .map(|p| small_rows_for(p, config))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    })
}

/// Small suite over the configured matrix files. Load failures become a
/// single error row for that matrix.
pub fn run_small_suite(config: &ExperimentConfig) -> Vec<SmallRow> {
    config
        .matrix_paths
        .iter()
        .flat_map(|path| match config.load_problem(path) {
            Ok(p) => run_small_suite_on(std::slice::from_ref(&p), config),
            Err(e) => vec![SmallRow {
                matrix: path.display().to_string(),
                x0: "zero",
                error: format!("load: {e}"),
                ..SmallRow::default()
            }],
        })
        .collect()
}

// ---------------------------------------------------------------- large suite

pub const LARGE_HEADER: [&str; 17] = [
    "matrix",
    "n",
    "preconditioner",
    "r",
    "alpha",
    "rel_residual",
    "iterations",
    "converged",
    "reason",
    "construction_s",
    "solve_s",
    "matvecs_total",
    "matvecs_construct",
    "eig_converged",
    "x0",
    "notes",
    "error",
];

/// One solve of the large suite. `matvecs_total` counts every product with
/// `S`, including those spent building the preconditioner.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LargeRow {
    pub matrix: String,
    pub n: Option<usize>,
    pub preconditioner: String,
    pub r: Option<usize>,
    pub alpha: Option<f64>,
    pub rel_residual: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub reason: String,
    pub construction_s: Option<f64>,
    pub solve_s: Option<f64>,
    pub matvecs_total: Option<usize>,
    pub matvecs_construct: Option<usize>,
    pub eig_converged: Option<bool>,
    pub x0: &'static str,
    pub notes: String,
    pub error: String,
}

impl LargeRow {
    /// Copy with the timing columns cleared, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        Self {
            construction_s: None,
            solve_s: None,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct LargeTask {
    choice: PrecondChoice,
    r: Option<usize>,
    fraction: f64,
    alpha: Option<f64>,
}

fn large_tasks(n: usize, config: &ExperimentConfig, choices: &[PrecondChoice]) -> Vec<LargeTask> {
    let mut tasks = Vec::new();
    for &choice in choices.iter().filter(|c| !c.uses_rank()) {
        tasks.push(LargeTask { choice, r: None, fraction: 0.0, alpha: None });
    }
    for fraction in config.rank_fractions() {
        let r = rank_for(n, fraction);
        for &choice in choices.iter().filter(|c| c.uses_rank()) {
            if choice == PrecondChoice::BregAlpha {
                for &alpha in &config.alphas {
                    tasks.push(LargeTask { choice, r: Some(r), fraction, alpha: Some(alpha) });
                }
            } else {
                tasks.push(LargeTask { choice, r: Some(r), fraction, alpha: None });
            }
        }
    }
    tasks
}

fn large_rows_for(problem: &ProblemInstance, config: &ExperimentConfig, choices: &[PrecondChoice]) -> Vec<LargeRow> {
    let n = problem.n();
    let opts = config.pcg_options();
    let factor_start = Instant::now();
    let factor = ic0(&problem.s, config.diag_shift);
    let factor_s = factor_start.elapsed().as_secs_f64();

    large_tasks(n, config, choices)
        .par_iter()
        .map(|task| {
            let mut row = LargeRow {
                matrix: problem.name.clone(),
                n: Some(n),
                preconditioner: task.choice.to_string(),
                r: task.r,
                alpha: task.alpha,
                x0: "zero",
                ..LargeRow::default()
            };
            let q = match (&factor, task.choice) {
                (_, PrecondChoice::None) => None,
                (Ok(q), _) => Some(q),
                (Err(e), _) => {
                    row.error = format!("ichol: {e}");
                    return row;
                }
            };
            let built = build_preconditioner(
                task.choice,
                &problem.s,
                q,
                task.r.unwrap_or(0),
                task.alpha.unwrap_or(0.0),
                task.fraction,
                config,
            );
            let built = match built {
                Ok(b) => b,
                Err(e) => {
                    row.error = format!("construction: {e}");
                    return row;
                }
            };
            let factor_time = if q.is_some() { factor_s } else { 0.0 };
            row.construction_s = Some(built.construct_s + factor_time);
            row.matvecs_construct = Some(built.s_matvecs);
            row.eig_converged = Some(built.eig_converged);
            row.notes = join_notes(built.notes);
            match pcg_solve(&problem.s, &problem.b, &built.preconditioner, &opts) {
                Ok((_, rep)) => {
                    row.rel_residual = Some(rep.final_rel_residual);
                    row.iterations = Some(rep.iterations);
                    row.converged = rep.converged;
                    row.reason = rep.reason.as_str().to_string();
                    row.solve_s = Some(rep.time_solve_s);
                    row.matvecs_total = Some(built.s_matvecs + rep.matvecs_s);
                    if rep.residual_gap {
                        row.notes = join_notes([row.notes.clone(), "recurrence/true residual gap".to_string()]);
                    }
                }
                Err(e) => row.error = format!("solve: {e}"),
            }
            row
        })
        .collect()
}

pub fn run_large_suite_on(problems: &[ProblemInstance], config: &ExperimentConfig) -> Result<Vec<LargeRow>> {
    let choices = config.preconditioner_list()?;
    Ok(with_pool(|| {
        problems
            .par_iter()
            .map(|p| large_rows_for(p, config, &choices))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }))
}

pub fn run_large_suite(config: &ExperimentConfig) -> Result<Vec<LargeRow>> {
    let mut rows = Vec::new();
    for path in &config.matrix_paths {
        match config.load_problem(path) {
            Ok(p) => rows.extend(run_large_suite_on(std::slice::from_ref(&p), config)?),
            Err(e) => rows.push(LargeRow {
                matrix: path.display().to_string(),
                x0: "zero",
                error: format!("load: {e}"),
                ..LargeRow::default()
            }),
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------- spectrum

pub const SPECTRUM_HEADER: [&str; 5] = ["index", "theta", "gamma", "nu", "abs"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub index: usize,
    pub theta: f64,
    pub gamma: f64,
    pub nu: f64,
    pub abs: f64,
}

/// Eigenvalues of the scaled error in descending order with their images
/// under both divergence curves. Out-of-domain values map to NaN.
pub fn spectrum_rows(s: &CsrMatrix, q: &CholFactor, cap: usize) -> Result<Vec<SpectrumRow>> {
    let spectrum = ExactSpectrum::compute(s, q, cap)?;
    Ok(spectrum
        .values()
        .iter()
        .enumerate()
        .map(|(index, &theta)| SpectrumRow {
            index,
            theta,
            gamma: gamma(theta).unwrap_or(f64::NAN),
            nu: nu(theta).unwrap_or(f64::NAN),
            abs: theta.abs(),
        })
        .collect())
}

// ---------------------------------------------------------------- csv output

/// Writes `header` followed by `rows`; an empty slice yields the header only.
pub fn write_csv<W: Write, T: Serialize>(out: W, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_small_csv<W: Write>(out: W, rows: &[SmallRow]) -> Result<()> {
    write_csv(out, &SMALL_HEADER, rows)
}

pub fn write_large_csv<W: Write>(out: W, rows: &[LargeRow]) -> Result<()> {
    write_csv(out, &LARGE_HEADER, rows)
}

pub fn write_spectrum_csv<W: Write>(out: W, rows: &[SpectrumRow]) -> Result<()> {
    write_csv(out, &SPECTRUM_HEADER, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bregman::LowRank;
    use crate::dense::{dense_cholesky, thin_qr, DenseMatrix};
    use crate::rng::NormalStream;

    fn tridiag(n: usize, diag: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, diag));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    fn problem(name: &str, s: CsrMatrix) -> ProblemInstance {
        ProblemInstance::from_matrix(name, s, RhsMode::Random, 11).unwrap()
    }

    /// `S = Q (I + Z diag(lam) Z^T) Q^T` with `Q` the tridiagonal factor.
    fn exact_rank_instance(n: usize, lam: &[f64], seed: u64) -> ProblemInstance {
        let t = tridiag(n, 2.5);
        let q = ic0(&t, 0.0).unwrap();
        let g = DenseMatrix::from_vec(n, lam.len(), NormalStream::new(seed).normal_vec(n * lam.len()));
        let (z, _) = thin_qr(&g).unwrap();
        let w = LowRank::new(z, lam.to_vec()).unwrap();
        let inner = DenseMatrix::identity(n, n) + w.to_dense();
        let qd = q.to_dense();
        let s = &qd * inner * qd.transpose();
        problem("exact", CsrMatrix::from_dense(&crate::dense::symmetrize(&s), 0.0).unwrap())
    }

    #[test]
    fn golden_headers() {
        let mut buf = Vec::new();
        write_small_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "matrix,n,nnz,r,eps,iter_none,iter_ichol,iter_rbreg,iter_svd,iter_breg,kappa_rbreg,kappa_svd,\
             kappa_breg,dld_rbreg,dld_svd,dld_breg,dld_rev_rbreg,dagger_rbreg,dagger_svd,dagger_breg,x0,notes,error\n"
        );
        let mut buf = Vec::new();
        write_large_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "matrix,n,preconditioner,r,alpha,rel_residual,iterations,converged,reason,construction_s,solve_s,\
             matvecs_total,matvecs_construct,eig_converged,x0,notes,error\n"
        );
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,theta,gamma,nu,abs\n");
    }

    #[test]
    fn row_fields_match_headers() {
        let mut buf = Vec::new();
        let mut w = csv::Writer::from_writer(&mut buf);
        w.serialize(SmallRow::default()).unwrap();
        w.serialize(SmallRow::default()).unwrap();
        drop(w);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), SMALL_HEADER.join(","));

        let mut buf = Vec::new();
        let mut w = csv::Writer::from_writer(&mut buf);
        w.serialize(LargeRow::default()).unwrap();
        drop(w);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), LARGE_HEADER.join(","));
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = ExperimentConfig::from_toml_str(
            "suite = \"large\"\nalphas = [0.0, 1.0]\npreconditioners = [\"ichol\", \"breg_alpha\"]\nseed = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.suite, Suite::Large);
        assert_eq!(cfg.rank_fractions(), vec![0.0025, 0.0075]);
        assert_eq!(cfg.pcg_options().maxit, 350);
        assert_eq!(cfg.eig_params(0.0025).max_restarts, 60);
        assert_eq!(cfg.eig_params(0.0075).max_restarts, 100);
        assert_eq!(cfg.preconditioner_list().unwrap(), vec![PrecondChoice::Ichol, PrecondChoice::BregAlpha]);

        assert!(ExperimentConfig::from_toml_str("rank_fractions = [1.5]").is_err());
        assert!(ExperimentConfig::from_toml_str("alphas = [-0.1]").is_err());
        assert!(ExperimentConfig::from_toml_str("preconditioners = [\"bogus\"]").is_err());
        assert!(ExperimentConfig::from_toml_str("unknown_key = 1").is_err());
        let d = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(d, ExperimentConfig::default());
        assert_eq!(d.pcg_options().maxit, 100);
    }

    #[test]
    fn empty_suites_produce_header_only() {
        let cfg = ExperimentConfig::default();
        assert!(run_small_suite(&cfg).is_empty());
        assert!(run_large_suite(&ExperimentConfig::for_suite(Suite::Large)).unwrap().is_empty());
    }

    #[test]
    fn exact_rank_instance_converges_quickly() {
        let p = exact_rank_instance(200, &[3.0, -0.5], 1);
        let cfg = ExperimentConfig {
            rank_fractions: Some(vec![0.01, 0.05]),
            ..ExperimentConfig::default()
        };
        let rows = run_small_suite_on(&[p], &cfg);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].r, Some(2));
        let it: usize = rows[0].iter_breg.parse().unwrap();
        assert!(it <= 3, "breg took {it}");
        assert!(rows[0].dld_breg.unwrap() < 1e-9);
        assert!(rows.iter().all(|r| r.error.is_empty()));
    }

    #[test]
    fn semidefinite_error_sets_dagger_everywhere() {
        // IC(0) is exact on tridiagonals, so a diagonal shift leaves
        // Q Q^T = S + shift diag(S) and a negative semidefinite scaled error
        let p = problem("tri", tridiag(80, 2.3));
        let cfg = ExperimentConfig {
            rank_fractions: Some(vec![0.05, 0.1]),
            diag_shift: 0.2,
            ..ExperimentConfig::default()
        };
        let rows = run_small_suite_on(&[p], &cfg);
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(row.dagger_rbreg && row.dagger_svd && row.dagger_breg, "{row:?}");
        }
    }

    #[test]
    fn large_suite_layout_and_accounting() {
        let p = problem("tri", tridiag(400, 2.05));
        let cfg = ExperimentConfig {
            suite: Suite::Large,
            rank_fractions: Some(vec![0.01]),
            alphas: vec![0.0, 0.5, 1.0],
            appendix_mode: true,
            ..ExperimentConfig::default()
        };
        let rows = run_large_suite_on(&[p.clone()], &cfg).unwrap();
        let labels: Vec<_> = rows.iter().map(|r| (r.preconditioner.as_str(), r.alpha)).collect();
        assert_eq!(
            labels,
            vec![
                ("none", None),
                ("ichol", None),
                ("nys", None),
                ("nys_indef", None),
                ("svd_ks", None),
                ("breg_alpha", Some(0.0)),
                ("breg_alpha", Some(0.5)),
                ("breg_alpha", Some(1.0)),
            ]
        );
        let ichol = &rows[1];
        assert_eq!(ichol.r, None);
        assert_eq!(ichol.matvecs_construct, Some(0));
        for row in &rows {
            assert!(row.error.is_empty(), "{row:?}");
            if row.preconditioner != "none" && row.preconditioner != "ichol" {
                assert_eq!(row.r, Some(4));
            }
        }
        // alpha = 1 and svd_ks both run one largest-eigenpair Lanczos of the same size
        let svd_ks = rows[4].matvecs_construct.unwrap() as f64;
        let alpha1 = rows[7].matvecs_construct.unwrap() as f64;
        assert!((svd_ks - alpha1).abs() <= 0.5 * svd_ks.max(alpha1), "{svd_ks} vs {alpha1}");

        // rerun reproduces every non-timing column
        let again = run_large_suite_on(&[p], &cfg).unwrap();
        let a: Vec<_> = rows.iter().map(LargeRow::without_timings).collect();
        let b: Vec<_> = again.iter().map(LargeRow::without_timings).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn spectrum_rows_are_consistent() {
        let s = tridiag(30, 2.2);
        let q = ic0(&s, 0.0).unwrap();
        let rows = spectrum_rows(&s, &q, DEFAULT_DENSIFY_CAP).unwrap();
        assert_eq!(rows.len(), 30);
        for w in rows.windows(2) {
            assert!(w[0].theta >= w[1].theta);
        }
        // IC(0) is exact on tridiagonals
        assert!(rows.iter().all(|r| r.abs < 1e-10 && r.gamma.abs() < 1e-12));
        let _ = dense_cholesky(&s.to_dense()).unwrap();
    }

    #[test]
    fn load_failure_is_captured() {
        let cfg = ExperimentConfig {
            matrix_paths: vec![PathBuf::from("/nonexistent/matrix.mtx")],
            ..ExperimentConfig::default()
        };
        let rows = run_small_suite(&cfg);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].error.starts_with("load:"));
    }
}
