//! SIS dynamics under vaccination: vector field, RK4 trajectories and the
//! maximal equilibrium.

use crate::error::{check_len, Error, Result};
use crate::matrix::{solve, Matrix};
use crate::model::{Model, Strategy};
use crate::operator::{apply_kernel, r_e_with, KernelChoice, SpectralOptions};
use crate::scalar::{max_abs_diff, sup_norm, Scalar};

pub const DEFAULT_EQUILIBRIUM_TOL: f64 = 1e-10;
/// At or below `1 + SNAP_MARGIN` the maximal equilibrium is exactly zero.
pub const SNAP_MARGIN: f64 = 1e-9;
/// `|R_e − 1|` below this switches to the near-critical regime.
pub const NEAR_CRITICAL: f64 = 1e-3;
const NEAR_CRITICAL_TOL: f64 = 1e-8;
const NEAR_CRITICAL_CAP_FACTOR: usize = 100;
const NEWTON_EVERY: usize = 256;
const ODE_FALLBACK_T_END: f64 = 200.0;
const ODE_FALLBACK_DOUBLINGS: usize = 4;

/// `F_eta(g) = (1 − g) · T_{k eta}(g) − gamma · g`.
pub fn vector_field<T: Scalar>(model: &Model<T>, eta: &Strategy<T>, g: &[T]) -> Result<Vec<T>> {
    let pressure = apply_kernel(model, KernelChoice::Transmission, g, eta)?;
    Ok(field_from_pressure(model, g, &pressure))
}

fn field_from_pressure<T: Scalar>(model: &Model<T>, g: &[T], pressure: &[T]) -> Vec<T> {
    g.iter()
        .zip(pressure)
        .zip(model.gamma())
        .map(|((&gi, &p), &gamma)| (T::one() - gi) * p - gamma * gi)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState<T> {
    pub t: T,
    /// Infection probability of a non-vaccinated individual, per feature.
    pub u: Vec<T>,
}

/// `0.01 / maxᵢ (gamma[i] + ∑ⱼ k(i, j))`.
pub fn default_dt<T: Scalar>(model: &Model<T>) -> T {
    let rate = model
        .kernel()
        .row_sums()
        .iter()
        .zip(model.gamma())
        .fold(T::zero(), |acc, (&r, &g)| acc.max(r + g));
    T::lit(0.01) / rate
}

struct Rk4<'a, T> {
    model: &'a Model<T>,
    /// `k(i, j) · eta[j] · weights[j]`
    effective: Matrix<T>,
}

impl<'a, T: Scalar> Rk4<'a, T> {
    fn new(model: &'a Model<T>, eta: &Strategy<T>) -> Self {
        let n = model.n();
        let effective = Matrix::from_fn(n, n, |i, j| {
            model.kernel()[(i, j)] * eta.as_slice()[j] * model.weights()[j]
        });
        Self { model, effective }
    }

    fn field(&self, u: &[T]) -> Vec<T> {
        field_from_pressure(self.model, u, &self.effective.mul_vec(u))
    }

    /// One RK4 step of size `h`, clamped to `[0, 1]`; returns the clamp magnitude.
    fn step(&self, u: &mut [T], h: T) -> T {
        let half = h / T::lit(2.0);
        let axpy = |a: T, d: &[T]| -> Vec<T> { u.iter().zip(d).map(|(&x, &y)| x + a * y).collect() };
        let k1 = self.field(u);
        let k2 = self.field(&axpy(half, &k1));
        let k3 = self.field(&axpy(half, &k2));
        let k4 = self.field(&axpy(h, &k3));
        let sixth = h / T::lit(6.0);
        let mut clamp = T::zero();
        for i in 0..u.len() {
            let x = u[i] + sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
            let c = x.max(T::zero()).min(T::one());
            clamp = clamp.max((x - c).abs());
            u[i] = c;
        }
        clamp
    }
}

fn check_integration<T: Scalar>(model: &Model<T>, u0: &[T], t_end: T, dt: T) -> Result<()> {
    check_len("initial state", model.n(), u0.len())?;
    if u0.iter().any(|&x| !(x >= T::zero() && x <= T::one())) {
        return Err(Error::InvalidIntegration("u0 must lie in [0, 1]".into()));
    }
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidIntegration(format!("dt = {dt} must be positive")));
    }
    if !(t_end >= T::zero()) || !t_end.is_finite() {
        return Err(Error::InvalidIntegration(format!("t_end = {t_end} must be nonnegative")));
    }
    Ok(())
}

fn run<T: Scalar>(
    model: &Model<T>,
    eta: &Strategy<T>,
    u0: &[T],
    t_end: T,
    dt: T,
    mut visit: impl FnMut(T, &[T]),
) -> Result<Vec<T>> {
    model.check_strategy(eta)?;
    check_integration(model, u0, t_end, dt)?;
    let rk = Rk4::new(model, eta);
    let limit = T::lit(10.0) * dt.powi(5);
    let steps = (t_end / dt - T::tol(1e-9)).ceil().max(T::zero()).to_usize().unwrap_or(0);
    let mut u = u0.to_vec();
    visit(T::zero(), &u);
    for s in 0..steps {
        let t = T::lit(s as f64) * dt;
        let h = dt.min(t_end - t);
        let clamp = rk.step(&mut u, h);
        if clamp > limit {
            return Err(Error::StepRejected {
                t: t.as_f64(),
                clamp: clamp.as_f64(),
                limit: limit.as_f64(),
            });
        }
        visit(if s + 1 == steps { t_end } else { t + h }, &u);
    }
    Ok(u)
}

/// Fixed-step RK4 trajectory sampled at every multiple of `dt` (and `t_end`).
pub fn integrate<T: Scalar>(
    model: &Model<T>,
    eta: &Strategy<T>,
    u0: &[T],
    t_end: T,
    dt: T,
) -> Result<Vec<TrajectoryState<T>>> {
    let mut out = Vec::new();
    run(model, eta, u0, t_end, dt, |t, u| {
        out.push(TrajectoryState { t, u: u.to_vec() })
    })?;
    Ok(out)
}

/// State at `t_end` without storing the trajectory.
pub fn integrate_final<T: Scalar>(
    model: &Model<T>,
    eta: &Strategy<T>,
    u0: &[T],
    t_end: T,
    dt: T,
) -> Result<Vec<T>> {
    run(model, eta, u0, t_end, dt, |_, _| {})
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquilibriumMethod {
    /// `R_e ≤ 1`: the maximal equilibrium is zero.
    Snapped,
    FixedPoint,
    /// Fixed point followed by Newton refinement.
    Newton,
    /// Long RK4 run from the all-infected state.
    Ode,
}

#[derive(Clone, Debug)]
pub struct Equilibrium<T> {
    pub g: Vec<T>,
    /// `‖F_eta(g)‖∞`.
    pub residual: T,
    pub is_maximal: bool,
    pub r_e: T,
    pub iterations: usize,
    pub method: EquilibriumMethod,
    pub warning: Option<String>,
}

#[derive(Clone, Copy, Debug)]
pub struct EquilibriumOptions<T> {
    pub tol: T,
    /// Fixed-point iteration cap away from criticality.
    pub max_iterations: usize,
    pub spectral: SpectralOptions<T>,
}

impl<T: Scalar> Default for EquilibriumOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::tol(DEFAULT_EQUILIBRIUM_TOL),
            max_iterations: 20_000,
            spectral: SpectralOptions::default(),
        }
    }
}

impl<T: Scalar> EquilibriumOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

struct FixedPointMap<'a, T> {
    model: &'a Model<T>,
    eta: &'a Strategy<T>,
    effective: Matrix<T>,
}

impl<'a, T: Scalar> FixedPointMap<'a, T> {
    fn new(model: &'a Model<T>, eta: &'a Strategy<T>) -> Self {
        let rk = Rk4::new(model, eta);
        Self {
            model,
            eta,
            effective: rk.effective,
        }
    }

    /// `T(g) / (gamma + T(g))`.
    fn apply(&self, g: &[T]) -> Vec<T> {
        self.effective
            .mul_vec(g)
            .iter()
            .zip(self.model.gamma())
            .map(|(&p, &gamma)| p / (gamma + p))
            .collect()
    }

    fn residual(&self, g: &[T]) -> T {
        sup_norm(&field_from_pressure(self.model, g, &self.effective.mul_vec(g)))
    }

    /// Newton iterations on `F_eta`; `None` if the linear system degenerates.
    fn newton(&self, start: &[T]) -> Option<Vec<T>> {
        let n = start.len();
        let mut g = start.to_vec();
        let mut best = self.residual(&g);
        for _ in 0..8 {
            let pressure = self.effective.mul_vec(&g);
            let f = field_from_pressure(self.model, &g, &pressure);
            let jac = Matrix::from_fn(n, n, |i, j| {
                let mut v = (T::one() - g[i]) * self.effective[(i, j)];
                if i == j {
                    v -= pressure[i] + self.model.gamma()[i];
                }
                v
            });
            let rhs: Vec<T> = f.iter().map(|&x| -x).collect();
            let d = solve(&jac, &rhs)?;
            let next: Vec<T> = g
                .iter()
                .zip(&d)
                .map(|(&x, &dx)| (x + dx).max(T::zero()).min(T::one()))
                .collect();
            let r = self.residual(&next);
            if !(r < best) {
                break;
            }
            best = r;
            g = next;
            if best <= T::epsilon() {
                break;
            }
        }
        Some(g)
    }

    /// Newton refinement from an iterate lying above the maximal equilibrium,
    /// accepted only when the result is critical: `R_e(eta · (1 − g)) ≤ 1`.
    fn polish(&self, upper: &[T], spectral: &SpectralOptions<T>) -> Option<(Vec<T>, T)> {
        let candidate = self.newton(upper)?;
        let slack = T::tol(1e-9);
        if candidate.iter().zip(upper).any(|(&c, &u)| c > u + slack) {
            return None;
        }
        let residual = self.residual(&candidate);
        if residual > self.residual(upper) {
            return None;
        }
        let susceptible: Vec<T> = candidate.iter().map(|&x| T::one() - x).collect();
        let reduced = self.eta.hadamard(&susceptible).ok()?;
        let critical = r_e_with(self.model, &reduced, spectral).ok()?;
        (critical <= T::one() + T::tol(1e-6)).then_some((candidate, residual))
    }
}

/// Maximal equilibrium with default options and the given tolerance.
pub fn maximal_equilibrium<T: Scalar>(model: &Model<T>, eta: &Strategy<T>, tol: T) -> Result<Equilibrium<T>> {
    maximal_equilibrium_with(model, eta, &EquilibriumOptions::with_tol(tol))
}

/// Largest zero of `F_eta`, reached by iterating `g ← T(g) / (gamma + T(g))`
/// downward from `g = 1`.
///
/// Iterates are checked to be non-increasing. Once the step and residual
/// criteria hold, a Newton refinement is attempted and kept only if it passes
/// the criticality certificate. If the iteration cap is hit, long RK4 runs
/// from `u0 = 1` are tried before giving up.
pub fn maximal_equilibrium_with<T: Scalar>(
    model: &Model<T>,
    eta: &Strategy<T>,
    opts: &EquilibriumOptions<T>,
) -> Result<Equilibrium<T>> {
    model.check_strategy(eta)?;
    if !(opts.tol > T::zero()) {
        return Err(Error::EquilibriumNotConverged(format!(
            "tolerance {} must be positive",
            opts.tol
        )));
    }
    let n = model.n();
    let r = r_e_with(model, eta, &opts.spectral)?;
    if r <= T::one() + T::tol(SNAP_MARGIN) {
        return Ok(Equilibrium {
            g: vec![T::zero(); n],
            residual: T::zero(),
            is_maximal: true,
            r_e: r,
            iterations: 0,
            method: EquilibriumMethod::Snapped,
            warning: None,
        });
    }

    let near_critical = (r - T::one()).abs() < T::lit(NEAR_CRITICAL);
    let (tol, cap, warning) = if near_critical {
        (
            opts.tol.max(T::tol(NEAR_CRITICAL_TOL)),
            opts.max_iterations * NEAR_CRITICAL_CAP_FACTOR,
            Some(format!(
                "near-critical R_e = {r}: iteration cap raised and tolerance relaxed to {NEAR_CRITICAL_TOL:e}"
            )),
        )
    } else {
        (opts.tol, opts.max_iterations, None)
    };
    let max_gamma = model.gamma().iter().fold(T::zero(), |a, &b| a.max(b));
    let target = T::lit(10.0) * tol * max_gamma;
    let map = FixedPointMap::new(model, eta);
    let slack = T::epsilon() * T::lit(64.0);

    let finish = |g: Vec<T>, residual: T, iterations: usize, method: EquilibriumMethod| Equilibrium {
        g,
        residual,
        is_maximal: true,
        r_e: r,
        iterations,
        method,
        warning: warning.clone(),
    };

    let mut g = vec![T::one(); n];
    for step in 1..=cap {
        let next = map.apply(&g);
        for (i, (&a, &b)) in next.iter().zip(&g).enumerate() {
            if a > b + slack {
                return Err(Error::Monotonicity {
                    step,
                    index: i,
                    increase: (a - b).as_f64(),
                });
            }
        }
        let moved = max_abs_diff(&next, &g);
        g = next;
        let residual = map.residual(&g);
        if moved <= tol && residual <= target {
            return Ok(match map.polish(&g, &opts.spectral) {
                Some((p, res)) if res <= residual => finish(p, res, step, EquilibriumMethod::Newton),
                _ => finish(g, residual, step, EquilibriumMethod::FixedPoint),
            });
        }
        if step % NEWTON_EVERY == 0 {
            if let Some((p, res)) = map.polish(&g, &opts.spectral) {
                if res <= target {
                    return Ok(finish(p, res, step, EquilibriumMethod::Newton));
                }
            }
        }
    }

    if let Some((p, res)) = map.polish(&g, &opts.spectral) {
        if res <= target {
            return Ok(finish(p, res, cap, EquilibriumMethod::Newton));
        }
    }
    log::warn!("fixed-point iteration cap {cap} reached; falling back to RK4 integration");
    let dt = default_dt(model);
    let mut t_end = T::lit(ODE_FALLBACK_T_END);
    let ones = vec![T::one(); n];
    for _ in 0..ODE_FALLBACK_DOUBLINGS {
        let u = integrate_final(model, eta, &ones, t_end, dt)?;
        let residual = map.residual(&u);
        if residual <= target {
            return Ok(finish(u, residual, cap, EquilibriumMethod::Ode));
        }
        t_end = t_end * T::lit(2.0);
    }
    Err(Error::EquilibriumNotConverged(format!(
        "R_e = {r}: fixed point and RK4 fallback both missed residual target {target}"
    )))
}

/// `𝕴(eta) = ∑ g[i] · eta[i] · weights[i]` at the maximal equilibrium.
pub fn infected_fraction<T: Scalar>(model: &Model<T>, eta: &Strategy<T>) -> Result<T> {
    infected_fraction_with(model, eta, &EquilibriumOptions::default())
}

pub fn infected_fraction_with<T: Scalar>(
    model: &Model<T>,
    eta: &Strategy<T>,
    opts: &EquilibriumOptions<T>,
) -> Result<T> {
    let eq = maximal_equilibrium_with(model, eta, opts)?;
    Ok(fraction_of_equilibrium(model, eta, &eq.g))
}

/// `∑ g·eta·weights` for a given equilibrium `g`.
pub fn fraction_of_equilibrium<T: Scalar>(model: &Model<T>, eta: &Strategy<T>, g: &[T]) -> T {
    g.iter()
        .zip(eta.as_slice())
        .zip(model.weights())
        .map(|((&gi, &e), &w)| gi * e * w)
        .sum()
}
