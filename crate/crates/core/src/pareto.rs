//! Cost/loss outcomes, grid enumeration and (anti-)Pareto frontiers.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{infected_fraction_with, EquilibriumOptions};
use crate::error::{Error, Result};
use crate::model::{cost, Model, Strategy};
use crate::operator::{r_e_with, SpectralOptions};
use crate::scalar::Scalar;

pub const DEFAULT_BUDGET: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// Effective reproduction number.
    #[serde(rename = "re")]
    Re,
    /// Infected fraction at the maximal equilibrium.
    #[serde(rename = "i")]
    I,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontierKind {
    /// No strategy is strictly better (lower cost and loss).
    Pareto,
    /// No strategy is strictly worse.
    AntiPareto,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome<T> {
    pub cost: T,
    pub loss: T,
    pub strategy: Strategy<T>,
    pub loss_kind: LossKind,
}

#[derive(Clone, Debug)]
pub struct EvalOptions<T> {
    pub spectral: SpectralOptions<T>,
    pub equilibrium: EquilibriumOptions<T>,
}

impl<T: Scalar> Default for EvalOptions<T> {
    fn default() -> Self {
        Self {
            spectral: SpectralOptions::default(),
            equilibrium: EquilibriumOptions::default(),
        }
    }
}

pub fn evaluate<T: Scalar>(model: &Model<T>, eta: &Strategy<T>, loss_kind: LossKind) -> Result<Outcome<T>> {
    evaluate_with(model, eta, loss_kind, &EvalOptions::default())
}

pub fn evaluate_with<T: Scalar>(
    model: &Model<T>,
    eta: &Strategy<T>,
    loss_kind: LossKind,
    opts: &EvalOptions<T>,
) -> Result<Outcome<T>> {
    let loss = match loss_kind {
        LossKind::Re => r_e_with(model, eta, &opts.spectral)?,
        LossKind::I => infected_fraction_with(model, eta, &opts.equilibrium)?,
    };
    Ok(Outcome {
        cost: cost(model, eta)?,
        loss,
        strategy: eta.clone(),
        loss_kind,
    })
}

/// How the strategy simplex was discretized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GridResolution {
    /// Per-feature resolution: values `0, 1/m, …, 1`.
    pub m: usize,
    /// Dimension of the grid (before any lifting).
    pub dimension: usize,
    pub points: usize,
    /// Grid strategies were lifted from a reduced model.
    pub lifted: bool,
}

/// Number of grid points `(m + 1)^n`, or `None` on overflow.
pub fn grid_size(n: usize, m: usize) -> Option<u128> {
    (m as u128 + 1).checked_pow(u32::try_from(n).ok()?)
}

/// Grid point with lexicographic rank `index`, first coordinate most significant.
pub fn grid_point<T: Scalar>(index: usize, n: usize, m: usize) -> Strategy<T> {
    let mut values = vec![T::zero(); n];
    let mut rest = index;
    for v in values.iter_mut().rev() {
        *v = T::lit((rest % (m + 1)) as f64) / T::lit(m as f64);
        rest /= m + 1;
    }
    Strategy::new(values).expect("grid values lie in [0, 1]")
}

/// All grid strategies in lexicographic order.
pub fn grid_strategies<T: Scalar>(n: usize, m: usize, budget: u128) -> Result<Vec<Strategy<T>>> {
    let size = checked_grid(n, m, budget)?;
    Ok((0..size).map(|k| grid_point(k, n, m)).collect())
}

fn checked_grid(n: usize, m: usize, budget: u128) -> Result<usize> {
    if m == 0 {
        return Err(Error::InvalidStrategy("grid resolution must be at least 1".into()));
    }
    let required = grid_size(n, m).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(required as usize)
}

#[derive(Clone, Debug)]
pub struct EnumerateOptions<T> {
    pub budget: u128,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub eval: EvalOptions<T>,
}

impl<T: Scalar> Default for EnumerateOptions<T> {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BUDGET,
            workers: None,
            eval: EvalOptions::default(),
        }
    }
}

fn run_pool<R: Send>(workers: Option<usize>, job: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::ThreadPool(e.to_string()))?;
            Ok(pool.install(job))
        }
    }
}

/// Evaluates every strategy in parallel; output order matches input order.
pub fn evaluate_all<T: Scalar>(
    model: &Model<T>,
    strategies: &[Strategy<T>],
    loss_kind: LossKind,
    opts: &EnumerateOptions<T>,
) -> Result<Vec<Outcome<T>>> {
    run_pool(opts.workers, || {
        strategies
            .par_iter()
            .map(|eta| evaluate_with(model, eta, loss_kind, &opts.eval))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Outcomes of every strategy on the grid `{0, 1/m, …, 1}ⁿ`, in lexicographic order.
pub fn enumerate_outcomes<T: Scalar>(
    model: &Model<T>,
    loss_kind: LossKind,
    m: usize,
    opts: &EnumerateOptions<T>,
) -> Result<Vec<Outcome<T>>> {
    let n = model.n();
    let size = checked_grid(n, m, opts.budget)?;
    run_pool(opts.workers, || {
        (0..size)
            .into_par_iter()
            .map(|k| evaluate_with(model, &grid_point(k, n, m), loss_kind, &opts.eval))
            .collect::<Result<Vec<_>>>()
    })?
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Frontier<T> {
    pub kind: FrontierKind,
    /// Sorted by increasing cost.
    pub points: Vec<Outcome<T>>,
    pub grid_resolution: Option<GridResolution>,
    /// Points were moved off the grid by the coordinate-descent polish.
    pub polished: bool,
}

impl<T: Scalar> Frontier<T> {
    pub fn loss_kind(&self) -> Option<LossKind> {
        self.points.first().map(|p| p.loss_kind)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Objectives oriented so that smaller is better for `kind`.
fn oriented<T: Scalar>(o: &Outcome<T>, kind: FrontierKind) -> (T, T) {
    match kind {
        FrontierKind::Pareto => (o.cost, o.loss),
        FrontierKind::AntiPareto => (-o.cost, -o.loss),
    }
}

/// `true` for every outcome not strictly dominated under `kind`; duplicates are all kept.
///
/// With `tol > 0`, differences up to `tol` count as ties.
pub fn non_dominated_mask<T: Scalar>(outcomes: &[Outcome<T>], kind: FrontierKind, tol: T) -> Vec<bool> {
    let pts: Vec<(T, T)> = outcomes.iter().map(|o| oriented(o, kind)).collect();
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[a].0.partial_cmp(&pts[b].0).unwrap());
    let mut mask = vec![true; pts.len()];
    // min loss among points with cost < c − tol, and among cost ≤ c + tol
    let (mut below, mut below_min) = (0, T::infinity());
    let (mut upto, mut upto_min) = (0, T::infinity());
    for &i in &order {
        let (c, l) = pts[i];
        while below < order.len() && pts[order[below]].0 < c - tol {
            below_min = below_min.min(pts[order[below]].1);
            below += 1;
        }
        while upto < order.len() && pts[order[upto]].0 <= c + tol {
            upto_min = upto_min.min(pts[order[upto]].1);
            upto += 1;
        }
        if below_min <= l + tol || upto_min < l - tol {
            mask[i] = false;
        }
    }
    mask
}

fn lex_cmp<T: Scalar>(a: &Strategy<T>, b: &Strategy<T>) -> std::cmp::Ordering {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x.partial_cmp(y).unwrap())
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Non-dominated outcomes under `kind`, one per distinct (cost, loss), sorted by cost.
///
/// Among tied outcomes the lexicographically smallest strategy is kept.
pub fn frontier<T: Scalar>(outcomes: &[Outcome<T>], kind: FrontierKind) -> Frontier<T> {
    frontier_with_tol(outcomes, kind, T::zero())
}

pub fn frontier_with_tol<T: Scalar>(outcomes: &[Outcome<T>], kind: FrontierKind, tol: T) -> Frontier<T> {
    let mask = non_dominated_mask(outcomes, kind, tol);
    let mut kept: Vec<&Outcome<T>> = outcomes.iter().zip(&mask).filter(|(_, &k)| k).map(|(o, _)| o).collect();
    kept.sort_by(|a, b| {
        a.cost
            .partial_cmp(&b.cost)
            .unwrap()
            .then_with(|| lex_cmp(&a.strategy, &b.strategy))
    });
    let mut points: Vec<Outcome<T>> = Vec::new();
    let mut anchor: Option<(T, T)> = None;
    for o in kept {
        match anchor {
            Some((c, l)) if (o.cost - c).abs() <= tol && (o.loss - l).abs() <= tol => {
                let last = points.last_mut().expect("anchor implies a point");
                if lex_cmp(&o.strategy, &last.strategy).is_lt() {
                    *last = o.clone();
                }
            }
            _ => {
                anchor = Some((o.cost, o.loss));
                points.push(o.clone());
            }
        }
    }
    Frontier {
        kind,
        points,
        grid_resolution: None,
        polished: false,
    }
}

/// Grid enumeration followed by the dominance filter.
pub fn grid_frontier<T: Scalar>(
    model: &Model<T>,
    loss_kind: LossKind,
    m: usize,
    kind: FrontierKind,
    opts: &EnumerateOptions<T>,
) -> Result<Frontier<T>> {
    let outcomes = enumerate_outcomes(model, loss_kind, m, opts)?;
    let mut f = frontier(&outcomes, kind);
    f.grid_resolution = Some(GridResolution {
        m,
        dimension: model.n(),
        points: outcomes.len(),
        lifted: false,
    });
    Ok(f)
}

/// One round of coordinate moves of size `step` from every frontier strategy.
///
/// The result is no longer a grid frontier and is flagged as polished.
pub fn polish<T: Scalar>(model: &Model<T>, f: &Frontier<T>, step: T, opts: &EnumerateOptions<T>) -> Result<Frontier<T>> {
    let Some(loss_kind) = f.loss_kind() else {
        return Ok(f.clone());
    };
    let mut candidates: Vec<Strategy<T>> = Vec::new();
    for p in &f.points {
        for i in 0..p.strategy.len() {
            for delta in [step, -step] {
                let mut v = p.strategy.clone().into_vec();
                v[i] = (v[i] + delta).max(T::zero()).min(T::one());
                candidates.push(Strategy::new(v)?);
            }
        }
    }
    let mut outcomes = evaluate_all(model, &candidates, loss_kind, opts)?;
    outcomes.extend(f.points.iter().cloned());
    let mut out = frontier(&outcomes, f.kind);
    out.grid_resolution = f.grid_resolution;
    out.polished = true;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrontierComparison<T> {
    pub equal: bool,
    pub hausdorff_distance: T,
    /// Point of one frontier farthest from the other, and its nearest neighbour.
    pub witness: Option<[(T, T); 2]>,
}

/// Hausdorff distance between the two frontiers in the (cost, loss) plane.
pub fn compare_frontiers<T: Scalar>(f1: &Frontier<T>, f2: &Frontier<T>, tol: T) -> Result<FrontierComparison<T>> {
    if f1.kind != f2.kind {
        return Err(Error::FrontierMismatch(format!("{:?} vs {:?}", f1.kind, f2.kind)));
    }
    if let (Some(a), Some(b)) = (f1.loss_kind(), f2.loss_kind()) {
        if a != b {
            return Err(Error::FrontierMismatch(format!("loss {a:?} vs {b:?}")));
        }
    }
    if f1.is_empty() || f2.is_empty() {
        return Err(Error::Empty("frontier"));
    }
    let pts = |f: &Frontier<T>| f.points.iter().map(|o| (o.cost, o.loss)).collect::<Vec<_>>();
    let (p1, p2) = (pts(f1), pts(f2));
    let dist = |a: (T, T), b: (T, T)| (a.0 - b.0).hypot(a.1 - b.1);
    let mut best = (T::zero(), None);
    for (from, to) in [(&p1, &p2), (&p2, &p1)] {
        for &a in from {
            let (d, b) = to
                .iter()
                .map(|&b| (dist(a, b), b))
                .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
                .expect("nonempty");
            if d > best.0 || best.1.is_none() {
                best = (d, Some([a, b]));
            }
        }
    }
    Ok(FrontierComparison {
        equal: best.0 <= tol,
        hausdorff_distance: best.0,
        witness: best.1,
    })
}

/// Writes `cost,loss,eta_0,…` rows with 17 significant digits.
pub fn write_csv<T: Scalar, W: Write>(f: &Frontier<T>, mut out: W) -> std::io::Result<()> {
    let n = f.points.first().map_or(0, |p| p.strategy.len());
    let mut header = String::from("cost,loss");
    for i in 0..n {
        header.push_str(&format!(",eta_{i}"));
    }
    writeln!(out, "{header}")?;
    for p in &f.points {
        let mut line = format!("{:.16e},{:.16e}", p.cost.as_f64(), p.loss.as_f64());
        for v in p.strategy.as_slice() {
            line.push_str(&format!(",{:.16e}", v.as_f64()));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
