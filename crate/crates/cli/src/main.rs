//! `rank1-sparse`: relaxation bounds, dominance statistics, synthetic data,
//! metrics and penalty grids from the command line.
//!
//! Exit codes: 0 success, 1 error (including usage errors), 2 when a
//! solver stopped at its iteration limit without certifying optimality.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rank1_sparse::conic;
use rank1_sparse::cutting::{DEFAULT_ROUND_LIMIT, DEFAULT_VIOLATION_TOL};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_ITERATION_LIMIT: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "rank1-sparse", version, about = "Conic relaxations and penalties for best-subset regression")]
pub struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true, env = "RANK1_SPARSE_THREADS")]
    pub threads: Option<usize>,

    /// Omit wall-clock timings so repeated runs produce identical output.
    #[arg(long, global = true)]
    pub no_timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a relaxation, round it and report the optimality gap.
    Relax(RelaxArgs),
    /// Diagonal dominance of XᵀX + λI.
    Dd(DdArgs),
    /// Generate a synthetic train/validation pair with its ground truth.
    Gen(GenArgs),
    /// Score an estimate against a generated ground truth.
    Eval(EvalArgs),
    /// Tabulate the two-dimensional penalties on a square grid as CSV.
    PenaltyGrid(PenaltyGridArgs),
    /// Run elastic-net and relaxation-based selection on synthetic draws.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Persp,
    Sdp1,
    Sdp2,
    Sdp3,
    Sdplb,
    Sdpdd,
    Cuts,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    pub data: PathBuf,

    /// Response column: a header name, `#index`, or `last`.
    #[arg(long, default_value = "last")]
    pub response: String,

    /// Use the columns as given instead of centering and unit-norm scaling.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Solver tolerance on scaled residuals.
    #[arg(long, default_value_t = conic::DEFAULT_TOL)]
    pub tol: f64,

    /// Solver iteration limit.
    #[arg(long, default_value_t = conic::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct RelaxArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, value_enum)]
    pub kind: KindArg,

    /// Tikhonov weight λ.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,

    /// ℓ1 weight μ.
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,

    /// Cardinality bound.
    #[arg(long)]
    pub k: usize,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Permit order-3 subset blocks (their count grows as p³).
    #[arg(long)]
    pub allow_high_order: bool,

    /// Pairwise violation, relative to ‖y‖², below which the cut loop stops.
    #[arg(long, default_value_t = DEFAULT_VIOLATION_TOL)]
    pub violation_tol: f64,

    /// Relaxations solved by the cut loop, including the first.
    #[arg(long, default_value_t = DEFAULT_ROUND_LIMIT)]
    pub max_rounds: usize,

    /// Also write the JSON report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DdArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Ridge shift added to the diagonal before measuring.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,

    #[arg(long, default_value_t = conic::DEFAULT_TOL)]
    pub tol: f64,

    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Number of leading unit coefficients.
    #[arg(long)]
    pub s: usize,
    /// Autocorrelation of the features.
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub snr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub spec: SyntheticArgs,

    /// Directory receiving train.csv, validation.csv and truth.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// truth.json written by `gen`.
    #[arg(long)]
    pub truth: PathBuf,

    /// JSON array of coefficients, or a `relax` report.
    #[arg(long)]
    pub beta: PathBuf,

    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PenaltyGridArgs {
    /// Sets both δ₁ and δ₂.
    #[arg(long, conflicts_with_all = ["delta1", "delta2"])]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub delta1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta2: f64,
    #[arg(long)]
    pub kappa: f64,
    /// Half-width of the square [−extent, extent]².
    #[arg(long, default_value_t = 2.0)]
    pub extent: f64,
    /// Grid points per axis.
    #[arg(long, default_value_t = 81)]
    pub steps: usize,
    /// CSV destination (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub spec: SyntheticArgs,

    /// Largest cardinality tried by the relaxation path.
    #[arg(long)]
    pub k_max: usize,

    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    pub replications: u64,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// JSON-lines destination (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_follow_the_library() {
        let cli = Cli::try_parse_from(["rank1-sparse", "relax", "data.csv", "--kind", "sdp2", "--k", "3"]).unwrap();
        let Command::Relax(a) = cli.command else { panic!("relax expected") };
        assert_eq!(a.solver.tol, conic::DEFAULT_TOL);
        assert_eq!(a.solver.max_iters, conic::DEFAULT_MAX_ITERS);
        assert_eq!(a.max_rounds, DEFAULT_ROUND_LIMIT);
        assert_eq!((a.lambda, a.mu), (0.0, 0.0));
        assert_eq!(a.data.response, "last");
    }

    #[test]
    fn global_flags_parse_after_the_subcommand() {
        let cli = Cli::try_parse_from(["rank1-sparse", "dd", "x.csv", "--no-timing", "--threads", "2"]).unwrap();
        assert!(cli.no_timing);
        assert_eq!(cli.threads, Some(2));
    }
}
