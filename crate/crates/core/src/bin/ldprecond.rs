use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use logdet_precond::harness::{
    rank_for, run_large_suite, run_small_suite, solve_with, spectrum_rows, write_large_csv, write_small_csv,
    write_spectrum_csv, ExperimentConfig, Suite,
};
use logdet_precond::ichol::ic0;
use logdet_precond::matio::{ProblemInstance, RhsMode};
use logdet_precond::precond::PrecondChoice;
use logdet_precond::Result;

#[derive(Parser)]
#[command(name = "ldprecond", version, about = "Low-rank corrected incomplete Cholesky preconditioners for PCG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one system and print the solve report.
    Solve {
        /// none, ichol, svd, breg, rbreg, svd_ks, nys, nys_indef, breg_alpha
        #[arg(long, default_value = "breg")]
        precond: PrecondChoice,
        /// Rank as a fraction of n, r = floor(n * frac).
        #[arg(long, default_value_t = 0.05, conflicts_with = "rank")]
        rank_frac: f64,
        /// Absolute rank; overrides --rank-frac.
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        maxit: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Factor S + shift * diag(S) instead of S.
        #[arg(long, default_value_t = 0.0)]
        diag_shift: f64,
        /// Right-hand side for rectangular inputs: random or normal_equations.
        #[arg(long, default_value = "random", value_parser = parse_rhs)]
        rhs: RhsMode,
        /// Krylov positive part for breg_alpha instead of Nystrom.
        #[arg(long)]
        appendix: bool,
        path: PathBuf,
    },
    /// Run an experiment grid and write CSV.
    Bench {
        #[arg(long, default_value = "small")]
        suite: Suite,
        /// TOML configuration; command-line paths are appended to its list.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        paths: Vec<PathBuf>,
    },
    /// Dump eigenvalues of the scaled error and their curve images.
    Spectrum {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        diag_shift: f64,
    },
}

fn parse_rhs(s: &str) -> std::result::Result<RhsMode, String> {
    match s {
        "random" => Ok(RhsMode::Random),
        "normal_equations" | "normal-equations" => Ok(RhsMode::NormalEquations),
        other => Err(format!("unknown rhs mode '{other}'")),
    }
}

fn output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

const DOWNLOAD_HINT: &str = "\
matrices are read from local Matrix Market files; SuiteSparse inputs can be fetched from
  https://sparse.tamu.edu/MM/<group>/<name>.tar.gz  (e.g. HB/1138_bus, HB/bcsstk08)";

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            precond,
            rank_frac,
            rank,
            alpha,
            tol,
            maxit,
            seed,
            diag_shift,
            rhs,
            appendix,
            path,
        } => {
            let config = ExperimentConfig {
                tol: Some(tol),
                maxit: Some(maxit),
                seed,
                diag_shift,
                rhs_mode: rhs,
                appendix_mode: appendix,
                alphas: vec![alpha],
                rank_fractions: Some(vec![rank_frac]),
                ..ExperimentConfig::default()
            };
            config.validate()?;
            let problem = config.load_problem(&path)?;
            let n = problem.n();
            let r = rank.unwrap_or_else(|| rank_for(n, rank_frac));
            let fraction = rank.map(|r| r as f64 / n as f64).unwrap_or(rank_frac);
            let (rep, built) = solve_with(&problem, precond, r, alpha, fraction, &config)?;
            print_report(&problem, &rep, built.s_matvecs, built.eig_converged, &built.notes);
        }
        Command::Bench { suite, config, out, paths } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::for_suite(suite),
            };
            if config.is_none() {
                cfg.suite = suite;
            }
            cfg.matrix_paths.extend(paths);
            cfg.validate()?;
            if cfg.matrix_paths.is_empty() {
                eprintln!("no matrices given; writing header only\n{DOWNLOAD_HINT}");
            }
            for p in &cfg.matrix_paths {
                if !p.exists() {
                    eprintln!("missing {}\n{DOWNLOAD_HINT}", p.display());
                }
            }
            let w = output(&out)?;
            match cfg.suite {
                Suite::Small => write_small_csv(w, &run_small_suite(&cfg))?,
                Suite::Large => write_large_csv(w, &run_large_suite(&cfg)?)?,
            }
        }
        Command::Spectrum { path, out, diag_shift } => {
            let problem = ProblemInstance::load(Path::new(&path), RhsMode::Random, 0)?;
            let q = ic0(&problem.s, diag_shift)?;
            let rows = spectrum_rows(&problem.s, &q, logdet_precond::bregman::DEFAULT_DENSIFY_CAP)?;
            write_spectrum_csv(output(&out)?, &rows)?;
        }
    }
    Ok(())
}

fn print_report(
    problem: &ProblemInstance,
    rep: &logdet_precond::SolveReport,
    construct_matvecs: usize,
    eig_converged: bool,
    notes: &[String],
) {
    println!("matrix              {}", problem.name);
    println!("n                   {}", problem.n());
    println!("nnz                 {}", problem.s.nnz());
    println!("origin              {}", problem.origin.as_str());
    println!("preconditioner      {}", rep.preconditioner_label);
    if let Some(r) = rep.r {
        println!("r                   {r}");
    }
    if let Some(a) = rep.alpha {
        println!("alpha               {a}");
    }
    println!("x0                  zero");
    println!("converged           {}", rep.converged);
    println!("reason              {}", rep.reason.as_str());
    println!("iterations          {}", rep.iterations);
    println!("rel_residual        {:.3e}", rep.final_rel_residual);
    println!("matvecs_solve       {}", rep.matvecs_s);
    println!("matvecs_construct   {construct_matvecs}");
    println!("eig_converged       {eig_converged}");
    println!("construction_s      {:.4}", rep.time_construct_s);
    println!("solve_s             {:.4}", rep.time_solve_s);
    if rep.residual_gap {
        println!("warning             recurrence and true residual differ by more than 10x tol");
    }
    for note in notes {
        println!("note                {note}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
