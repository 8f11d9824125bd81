use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use serde::Serialize;
use sis_core::coupling::{check_model_conjugacy, Side};
use sis_core::dynamics::{fraction_of_equilibrium, maximal_equilibrium_with, EquilibriumOptions};
use sis_core::io::{read_json, CouplingFile, read_model, read_partition, read_strategy, read_vector};
use sis_core::model::normalize;
use sis_core::operator::{r0_spectrum, re_spectrum, SpectralOptions};
use sis_core::pareto::{grid_frontier, polish, write_csv, EnumerateOptions, EvalOptions, FrontierKind, LossKind};
use sis_core::reduction::{coarsest_reduction, near_misses, reduce};
use sis_core::{Error, Model64};

use crate::{Kind, Loss, SideArg, Tolerances};

pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_INVALID_INPUT: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_BUDGET: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SpectralNonConvergence { .. }
            | Error::Monotonicity { .. }
            | Error::EquilibriumNotConverged(_)
            | Error::StepRejected { .. }
            | Error::ThreadPool(_) => EXIT_SOLVER,
            Error::BudgetExceeded { .. } => EXIT_BUDGET,
            _ => EXIT_INVALID_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_INVALID_INPUT,
        message: format!("cannot write {}: {e}", path.display()),
    }
}

/// A closed stdout (e.g. piped into `head`) is not an error.
fn stdout_result(r: std::io::Result<()>) -> Result<(), Failure> {
    match r {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io_failure(Path::new("stdout"), e)),
        _ => Ok(()),
    }
}

fn print_json<S: Serialize>(value: &S) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    stdout_result(writeln!(std::io::stdout().lock(), "{text}"))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    std::fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

pub struct Context {
    pub tol: Tolerances,
    pub workers: Option<usize>,
}

#[derive(Serialize)]
struct SpectrumOut {
    #[serde(skip_serializing_if = "Option::is_none")]
    r0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    re: Option<f64>,
    right_eigvec: Vec<f64>,
    left_eigvec: Vec<f64>,
}

#[derive(Serialize)]
struct EquilibriumOut {
    g: Vec<f64>,
    residual: f64,
    infected_fraction: f64,
}

#[derive(Serialize)]
struct ReduceOut<'a> {
    blocks: &'a [Vec<usize>],
    near_misses: Vec<sis_core::reduction::NearMiss>,
}

#[derive(Serialize)]
struct MapOut<'a> {
    phi: &'a [usize],
}

impl Context {
    fn spectral(&self) -> SpectralOptions<f64> {
        SpectralOptions::with_tol(self.tol.tol_spectral)
    }

    fn equilibrium_opts(&self) -> EquilibriumOptions<f64> {
        EquilibriumOptions {
            spectral: self.spectral(),
            ..EquilibriumOptions::with_tol(self.tol.tol_equilibrium)
        }
    }

    pub fn r0(&self, model: &Path) -> Result<ExitCode, Failure> {
        let m: Model64 = read_model(model)?;
        let s = r0_spectrum(&m, &self.spectral())?;
        print_json(&SpectrumOut {
            r0: Some(s.radius),
            re: None,
            right_eigvec: s.right,
            left_eigvec: s.left,
        })?;
        Ok(ExitCode::SUCCESS)
    }

    pub fn re(&self, model: &Path, eta: &Path) -> Result<ExitCode, Failure> {
        let m: Model64 = read_model(model)?;
        let s = re_spectrum(&m, &read_strategy(eta)?, &self.spectral())?;
        print_json(&SpectrumOut {
            r0: None,
            re: Some(s.radius),
            right_eigvec: s.right,
            left_eigvec: s.left,
        })?;
        Ok(ExitCode::SUCCESS)
    }

    pub fn equilibrium(&self, model: &Path, eta: &Path) -> Result<ExitCode, Failure> {
        let m: Model64 = read_model(model)?;
        let eta = read_strategy(eta)?;
        let eq = maximal_equilibrium_with(&m, &eta, &self.equilibrium_opts())?;
        if let Some(w) = &eq.warning {
            log::warn!("{w}");
        }
        let infected_fraction = fraction_of_equilibrium(&m, &eta, &eq.g);
        print_json(&EquilibriumOut {
            residual: eq.residual,
            infected_fraction,
            g: eq.g,
        })?;
        Ok(ExitCode::SUCCESS)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn frontier(
        &self,
        model: &Path,
        loss: Loss,
        m: usize,
        kind: Kind,
        out: Option<&Path>,
        budget: u128,
        refine: bool,
    ) -> Result<ExitCode, Failure> {
        let model: Model64 = read_model(model)?;
        let opts = EnumerateOptions {
            budget,
            workers: self.workers,
            eval: EvalOptions {
                spectral: self.spectral(),
                equilibrium: self.equilibrium_opts(),
            },
        };
        let loss = match loss {
            Loss::Re => LossKind::Re,
            Loss::I => LossKind::I,
        };
        let kind = match kind {
            Kind::Pareto => FrontierKind::Pareto,
            Kind::AntiPareto => FrontierKind::AntiPareto,
        };
        let mut f = grid_frontier(&model, loss, m, kind, &opts)?;
        if refine {
            f = polish(&model, &f, 1.0 / (m * m) as f64, &opts)?;
            log::warn!("frontier polished off the grid; do not use it for equality tests");
        }
        match out {
            Some(path) => {
                let file = File::create(path).map_err(|e| io_failure(path, e))?;
                let mut w = BufWriter::new(file);
                write_csv(&f, &mut w)
                    .and_then(|_| w.flush())
                    .map_err(|e| io_failure(path, e))?;
            }
            None => {
                let mut w = BufWriter::new(std::io::stdout().lock());
                stdout_result(write_csv(&f, &mut w).and_then(|_| w.flush()))?;
            }
        }
        Ok(ExitCode::SUCCESS)
    }

    pub fn reduce(
        &self,
        model: &Path,
        out_model: &Path,
        out_coupling: &Path,
        partition: Option<&Path>,
    ) -> Result<ExitCode, Failure> {
        let m: Model64 = read_model(model)?;
        let p = match partition {
            Some(path) => read_partition(path)?,
            None => coarsest_reduction(&m, self.tol.tol_reduce),
        };
        let (small, _) = reduce(&m, &p, self.tol.tol_reduce)?;
        let misses = near_misses(&m, &p, self.tol.tol_reduce);
        for n in &misses {
            log::warn!(
                "blocks {} and {} are near-mergeable ({} differs by {:e})",
                n.block_a,
                n.block_b,
                n.quantity,
                n.deviation
            );
        }
        write_json(out_model, &small.to_data())?;
        write_json(out_coupling, &MapOut { phi: p.quotient_map() })?;
        print_json(&ReduceOut {
            blocks: p.blocks(),
            near_misses: misses,
        })?;
        Ok(ExitCode::SUCCESS)
    }

    pub fn couple_check(&self, model1: &Path, model2: &Path, coupling: &Path) -> Result<ExitCode, Failure> {
        let m1: Model64 = read_model(model1)?;
        let m2: Model64 = read_model(model2)?;
        let file: CouplingFile<f64> = read_json(coupling)?;
        let c = file.resolve(Some(m1.weights()), Some(m2.weights()))?;
        let report = check_model_conjugacy(&c, &m1, &m2, self.tol.tol_conjugacy)?;
        print_json(&report)?;
        Ok(if report.all_passed() {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(EXIT_CHECK_FAILED)
        })
    }

    pub fn conjugate(
        &self,
        coupling: &Path,
        f: &Path,
        side: SideArg,
        left_model: Option<&Path>,
        right_model: Option<&Path>,
    ) -> Result<ExitCode, Failure> {
        let left: Option<Model64> = left_model.map(read_model).transpose()?;
        let right: Option<Model64> = right_model.map(read_model).transpose()?;
        let file: CouplingFile<f64> = read_json(coupling)?;
        let c = file.resolve(left.as_ref().map(|m| m.weights()), right.as_ref().map(|m| m.weights()))?;
        let f: Vec<f64> = read_vector(f)?;
        let side = match side {
            SideArg::Left => Side::Left,
            SideArg::Right => Side::Right,
        };
        print_json(&c.conjugate(&f, side)?)?;
        Ok(ExitCode::SUCCESS)
    }

    pub fn normalize(&self, model: &Path, out: Option<&Path>) -> Result<ExitCode, Failure> {
        let m: Model64 = read_model(model)?;
        let data = normalize(&m)?.to_data();
        match out {
            Some(path) => write_json(path, &data)?,
            None => print_json(&data)?,
        }
        Ok(ExitCode::SUCCESS)
    }
}
