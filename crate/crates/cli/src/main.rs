use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "sis", version, about = "Heterogeneous SIS models: reproduction numbers, equilibria, vaccination frontiers and couplings")]
struct Cli {
    #[command(flatten)]
    tol: Tolerances,

    /// Worker threads for grid evaluation (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct Tolerances {
    /// Spectral radius bracket tolerance.
    #[arg(long, global = true, default_value_t = sis_core::operator::DEFAULT_SPECTRAL_TOL, value_parser = positive)]
    pub tol_spectral: f64,
    /// Equilibrium step tolerance.
    #[arg(long, global = true, default_value_t = sis_core::dynamics::DEFAULT_EQUILIBRIUM_TOL, value_parser = positive)]
    pub tol_equilibrium: f64,
    /// Absolute tolerance for conjugacy checks.
    #[arg(long, global = true, default_value_t = sis_core::coupling::DEFAULT_CONJUGACY_TOL, value_parser = positive)]
    pub tol_conjugacy: f64,
    /// Absolute tolerance for merging features.
    #[arg(long, global = true, default_value_t = sis_core::reduction::DEFAULT_REDUCE_TOL, value_parser = positive)]
    pub tol_reduce: f64,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{v} is not a positive tolerance")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Loss {
    /// Effective reproduction number.
    Re,
    /// Infected fraction at equilibrium.
    I,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Pareto,
    AntiPareto,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Left,
    Right,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Basic reproduction number with Perron vectors.
    R0 { model: PathBuf },
    /// Effective reproduction number of a strategy.
    Re { model: PathBuf, eta: PathBuf },
    /// Maximal equilibrium and infected fraction of a strategy.
    Equilibrium { model: PathBuf, eta: PathBuf },
    /// Grid frontier written as CSV.
    Frontier {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Loss::Re)]
        loss: Loss,
        /// Per-feature grid resolution.
        #[arg(short, long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        m: u64,
        #[arg(long, value_enum, default_value_t = Kind::Pareto)]
        kind: Kind,
        /// Output CSV (stdout when omitted).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Maximum number of grid points.
        #[arg(long, default_value_t = sis_core::pareto::DEFAULT_BUDGET)]
        budget: u128,
        /// Coordinate-descent refinement around frontier points; output is off-grid.
        #[arg(long)]
        polish: bool,
    },
    /// Merge identical features; writes the reduced model and its coupling.
    Reduce {
        model: PathBuf,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_coupling: PathBuf,
        /// Reduce along this partition instead of the coarsest one.
        #[arg(long)]
        partition: Option<PathBuf>,
    },
    /// Check the conjugacy hypotheses between two coupled models.
    CoupleCheck {
        model1: PathBuf,
        model2: PathBuf,
        coupling: PathBuf,
    },
    /// Conjugate a vector through a coupling.
    Conjugate {
        coupling: PathBuf,
        f: PathBuf,
        /// Side the input vector lives on.
        #[arg(long, value_enum, default_value_t = SideArg::Left)]
        side: SideArg,
        /// Left model, whose weights are needed for `phi` couplings.
        #[arg(long)]
        left_model: Option<PathBuf>,
        #[arg(long)]
        right_model: Option<PathBuf>,
    },
    /// Rescale to unit recovery rates and unit cost density.
    Normalize {
        model: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let ctx = commands::Context {
        tol: cli.tol,
        workers: cli.workers.map(|w| w as usize),
    };
    match cli.command {
        Command::R0 { model } => ctx.r0(&model),
        Command::Re { model, eta } => ctx.re(&model, &eta),
        Command::Equilibrium { model, eta } => ctx.equilibrium(&model, &eta),
        Command::Frontier {
            model,
            loss,
            m,
            kind,
            out,
            budget,
            polish,
        } => ctx.frontier(&model, loss, m as usize, kind, out.as_deref(), budget, polish),
        Command::Reduce {
            model,
            out_model,
            out_coupling,
            partition,
        } => ctx.reduce(&model, &out_model, &out_coupling, partition.as_deref()),
        Command::CoupleCheck {
            model1,
            model2,
            coupling,
        } => ctx.couple_check(&model1, &model2, &coupling),
        Command::Conjugate {
            coupling,
            f,
            side,
            left_model,
            right_model,
        } => ctx.conjugate(&coupling, &f, side, left_model.as_deref(), right_model.as_deref()),
        Command::Normalize { model, out } => ctx.normalize(&model, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
