//! Couplings between finite feature spaces and the conjugation calculus.
//!
//! For a coupling `π` of two finite spaces, the common information
//! `σ(Z₁) ∩ σ(Z₂)` is generated by the connected components of the bipartite
//! support graph (edge `(i, j)` whenever `π[i][j] > ε`). The conjugate of a
//! function is its conditional expectation given that partition, read on the
//! other side.

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::model::Model;
use crate::scalar::Scalar;

/// Marginals must match the model weights to this accuracy.
pub const MARGINAL_TOL: f64 = 1e-9;
pub const DEFAULT_CONJUGACY_TOL: f64 = 1e-10;
/// Above this size the extended coupling is never built explicitly.
pub const EXPLICIT_EXTENDED_LIMIT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// One atom of the intersection σ-field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Component<T> {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    /// Total `π` mass carried by the component.
    pub mass: T,
}

#[derive(Clone, Debug)]
pub struct Coupling<T> {
    pi: Matrix<T>,
    left_marginal: Vec<T>,
    right_marginal: Vec<T>,
    components: Vec<Component<T>>,
    left_component: Vec<usize>,
    right_component: Vec<usize>,
    /// Per component: marginal mass of its left and right index sets.
    side_mass: Vec<(T, T)>,
    support_eps: T,
}

fn max_deviation<T: Scalar>(a: &[T], b: &[T]) -> Option<(usize, T)> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs())
        .enumerate()
        .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
}

impl<T: Scalar> Coupling<T> {
    /// Coupling whose marginals are read off `pi` itself.
    pub fn from_pi(pi: Matrix<T>) -> Result<Self> {
        Self::from_pi_with_support(pi, T::zero())
    }

    /// As [`Coupling::from_pi`] with support threshold `pi[i][j] > support_eps`.
    pub fn from_pi_with_support(pi: Matrix<T>, support_eps: T) -> Result<Self> {
        if pi.iter().any(|&x| !x.is_finite() || x < T::zero()) {
            return Err(Error::InvalidCoupling("pi has a negative or non-finite entry".into()));
        }
        let total: T = pi.iter().copied().sum();
        if (total - T::one()).abs() > T::tol(MARGINAL_TOL) {
            return Err(Error::InvalidCoupling(format!("pi sums to {total}, expected 1")));
        }
        let left = pi.row_sums();
        let right = pi.col_sums();
        Self::assemble(pi, left, right, support_eps)
    }

    /// Coupling with prescribed marginals, checked to `1e-9`.
    pub fn with_marginals(pi: Matrix<T>, left: &[T], right: &[T], support_eps: T) -> Result<Self> {
        check_len("coupling rows", left.len(), pi.rows())?;
        check_len("coupling columns", right.len(), pi.cols())?;
        if pi.iter().any(|&x| !x.is_finite() || x < T::zero()) {
            return Err(Error::InvalidCoupling("pi has a negative or non-finite entry".into()));
        }
        for (side, target, got) in [("left", left, pi.row_sums()), ("right", right, pi.col_sums())] {
            if let Some((index, dev)) = max_deviation(target, &got) {
                if dev > T::tol(MARGINAL_TOL) {
                    return Err(Error::Marginal {
                        side,
                        index,
                        deviation: dev.as_f64(),
                    });
                }
            }
        }
        Self::assemble(pi, left.to_vec(), right.to_vec(), support_eps)
    }

    /// Coupling `(X, φ(X))` for a map `φ` pushing `left` onto `right`.
    pub fn deterministic(left: &[T], phi: &[usize], right: &[T]) -> Result<Self> {
        check_len("phi", left.len(), phi.len())?;
        let mut pushed = vec![T::zero(); right.len()];
        for (i, &j) in phi.iter().enumerate() {
            if j >= right.len() {
                return Err(Error::InvalidCoupling(format!(
                    "phi[{i}] = {j} is out of range for {} right atoms",
                    right.len()
                )));
            }
            pushed[j] += left[i];
        }
        if let Some((index, dev)) = max_deviation(&pushed, right) {
            if dev > T::tol(MARGINAL_TOL) {
                return Err(Error::Pushforward {
                    index,
                    deviation: dev.as_f64(),
                });
            }
        }
        let mut pi = Matrix::zeros(left.len(), right.len());
        for (i, &j) in phi.iter().enumerate() {
            pi[(i, j)] = left[i];
        }
        Self::assemble(pi, left.to_vec(), right.to_vec(), T::zero())
    }

    fn assemble(pi: Matrix<T>, left: Vec<T>, right: Vec<T>, support_eps: T) -> Result<Self> {
        let (n1, n2) = (pi.rows(), pi.cols());
        if n1 == 0 || n2 == 0 {
            return Err(Error::Empty("coupling"));
        }
        for (side, m) in [("left", &left), ("right", &right)] {
            if let Some(i) = m.iter().position(|&w| !(w > T::zero())) {
                return Err(Error::InvalidCoupling(format!("{side} atom {i} has no mass")));
            }
        }
        let mut uf = UnionFind::<usize>::new(n1 + n2);
        for i in 0..n1 {
            for j in 0..n2 {
                if pi[(i, j)] > support_eps {
                    uf.union(i, n1 + j);
                }
            }
        }
        let labels = uf.into_labeling();
        let mut root_to_component = std::collections::HashMap::new();
        let mut components: Vec<Component<T>> = Vec::new();
        let mut left_component = vec![0; n1];
        let mut right_component = vec![0; n2];
        // components are numbered by their smallest left index, then right
        for node in 0..n1 + n2 {
            let c = *root_to_component.entry(labels[node]).or_insert_with(|| {
                components.push(Component {
                    left: Vec::new(),
                    right: Vec::new(),
                    mass: T::zero(),
                });
                components.len() - 1
            });
            if node < n1 {
                components[c].left.push(node);
                left_component[node] = c;
            } else {
                components[c].right.push(node - n1);
                right_component[node - n1] = c;
            }
        }
        for (c, comp) in components.iter().enumerate() {
            if comp.left.is_empty() || comp.right.is_empty() {
                return Err(Error::InvalidCoupling(format!(
                    "support threshold isolates component {c} ({:?} / {:?})",
                    comp.left, comp.right
                )));
            }
        }
        for i in 0..n1 {
            for j in 0..n2 {
                if pi[(i, j)] > support_eps {
                    components[left_component[i]].mass += pi[(i, j)];
                }
            }
        }
        let side_mass = components
            .iter()
            .map(|c| {
                (
                    c.left.iter().map(|&i| left[i]).sum(),
                    c.right.iter().map(|&j| right[j]).sum(),
                )
            })
            .collect();
        Ok(Self {
            pi,
            left_marginal: left,
            right_marginal: right,
            components,
            left_component,
            right_component,
            side_mass,
            support_eps,
        })
    }

    pub fn pi(&self) -> &Matrix<T> {
        &self.pi
    }

    pub fn left_len(&self) -> usize {
        self.pi.rows()
    }

    pub fn right_len(&self) -> usize {
        self.pi.cols()
    }

    pub fn len(&self, side: Side) -> usize {
        match side {
            Side::Left => self.left_len(),
            Side::Right => self.right_len(),
        }
    }

    pub fn marginal(&self, side: Side) -> &[T] {
        match side {
            Side::Left => &self.left_marginal,
            Side::Right => &self.right_marginal,
        }
    }

    pub fn components(&self) -> &[Component<T>] {
        &self.components
    }

    /// Component index of every atom on `side`.
    pub fn component_map(&self, side: Side) -> &[usize] {
        match side {
            Side::Left => &self.left_component,
            Side::Right => &self.right_component,
        }
    }

    pub fn support_eps(&self) -> T {
        self.support_eps
    }

    pub fn in_support(&self, i: usize, j: usize) -> bool {
        self.pi[(i, j)] > self.support_eps
    }

    /// Same coupling with the two sides swapped.
    pub fn transpose(&self) -> Self {
        Self::assemble(
            self.pi.transpose(),
            self.right_marginal.clone(),
            self.left_marginal.clone(),
            self.support_eps,
        )
        .expect("transpose of a valid coupling is valid")
    }

    fn side_mass(&self, c: usize, side: Side) -> T {
        match side {
            Side::Left => self.side_mass[c].0,
            Side::Right => self.side_mass[c].1,
        }
    }

    fn members(&self, c: usize, side: Side) -> &[usize] {
        match side {
            Side::Left => &self.components[c].left,
            Side::Right => &self.components[c].right,
        }
    }

    /// Conditional mean of `f` (living on `side`) on every component.
    pub fn component_means(&self, f: &[T], side: Side) -> Result<Vec<T>> {
        check_len("function", self.len(side), f.len())?;
        let w = self.marginal(side);
        Ok((0..self.components.len())
            .map(|c| {
                let s: T = self.members(c, side).iter().map(|&i| f[i] * w[i]).sum();
                s / self.side_mass(c, side)
            })
            .collect())
    }

    fn spread(&self, means: &[T], side: Side) -> Vec<T> {
        self.component_map(side).iter().map(|&c| means[c]).collect()
    }

    /// Conjugate of `f` (living on `side`): a function on the other side.
    pub fn conjugate(&self, f: &[T], side: Side) -> Result<Vec<T>> {
        let means = self.component_means(f, side)?;
        Ok(self.spread(&means, side.other()))
    }

    /// Largest `|f1[i] − f2[j]|` over support edges, with its location.
    pub fn conjugacy_violation(&self, f1: &[T], f2: &[T]) -> Result<(T, Option<(usize, usize)>)> {
        check_len("left function", self.left_len(), f1.len())?;
        check_len("right function", self.right_len(), f2.len())?;
        let mut worst = (T::zero(), None);
        for i in 0..self.left_len() {
            for j in 0..self.right_len() {
                if self.in_support(i, j) {
                    let d = (f1[i] - f2[j]).abs();
                    if d > worst.0 || (worst.1.is_none() && d.is_nan()) {
                        worst = (d, Some((i, j)));
                    }
                }
            }
        }
        Ok(worst)
    }

    /// `f1(Z₁) = f2(Z₂)` on the support of `π`.
    pub fn is_conjugate(&self, f1: &[T], f2: &[T], tol: T) -> Result<bool> {
        Ok(self.conjugacy_violation(f1, f2)?.0 <= tol)
    }

    /// Definitional route: `f1 = f2*` and `f2 = f1*`.
    pub fn is_conjugate_by_definition(&self, f1: &[T], f2: &[T], tol: T) -> Result<bool> {
        let f1_star = self.conjugate(f1, Side::Left)?;
        let f2_star = self.conjugate(f2, Side::Right)?;
        let close = |a: &[T], b: &[T]| crate::scalar::max_abs_diff(a, b) <= tol;
        Ok(close(f1, &f2_star) && close(f2, &f1_star))
    }

    /// `(f2*, f1*)` is conjugate: both functions have the same component means.
    pub fn is_preconjugate(&self, f1: &[T], f2: &[T], tol: T) -> Result<bool> {
        let m1 = self.component_means(f1, Side::Left)?;
        let m2 = self.component_means(f2, Side::Right)?;
        Ok(crate::scalar::max_abs_diff(&m1, &m2) <= tol)
    }

    pub fn extended(&self) -> ExtendedCoupling<'_, T> {
        ExtendedCoupling { base: self }
    }
}

/// Builds a coupling between two models, checking its marginals against their weights.
pub fn build_coupling<T: Scalar>(left: &Model<T>, right: &Model<T>, pi: Matrix<T>) -> Result<Coupling<T>> {
    Coupling::with_marginals(pi, left.weights(), right.weights(), T::zero())
}

pub fn deterministic_coupling<T: Scalar>(left: &Model<T>, right: &Model<T>, phi: &[usize]) -> Result<Coupling<T>> {
    Coupling::deterministic(left.weights(), phi, right.weights())
}

pub fn conjugate<T: Scalar>(c: &Coupling<T>, f: &[T], side: Side) -> Result<Vec<T>> {
    c.conjugate(f, side)
}

pub fn is_conjugate<T: Scalar>(c: &Coupling<T>, f1: &[T], f2: &[T], tol: T) -> Result<bool> {
    c.is_conjugate(f1, f2, tol)
}

pub fn is_preconjugate<T: Scalar>(c: &Coupling<T>, f1: &[T], f2: &[T], tol: T) -> Result<bool> {
    c.is_preconjugate(f1, f2, tol)
}

/// Independent product `π ⊗ π` on pairs of atoms, used to conjugate kernels.
///
/// Its support components are exactly the pairs `(A, B)` of base components.
#[derive(Clone, Copy, Debug)]
pub struct ExtendedCoupling<'a, T> {
    base: &'a Coupling<T>,
}

/// Explicitly constructed components of the extended coupling (tiny sizes only).
#[derive(Clone, Debug)]
pub struct ExplicitExtended {
    /// Component of the left pair `(x, y)` at `x * n1 + y`.
    pub left: Vec<usize>,
    /// Component of the right pair `(x, y)` at `x * n2 + y`.
    pub right: Vec<usize>,
    pub count: usize,
}

impl<'a, T: Scalar> ExtendedCoupling<'a, T> {
    pub fn base(&self) -> &'a Coupling<T> {
        self.base
    }

    /// Extended component of the pair `(x, y)` on `side`, as a pair of base components.
    pub fn component_of(&self, side: Side, x: usize, y: usize) -> (usize, usize) {
        let map = self.base.component_map(side);
        (map[x], map[y])
    }

    /// Conjugate of a kernel living on `side` × `side`.
    pub fn kernel_conjugate(&self, kernel: &Matrix<T>, side: Side) -> Result<Matrix<T>> {
        let n = self.base.len(side);
        check_len("kernel rows", n, kernel.rows())?;
        check_len("kernel columns", n, kernel.cols())?;
        let w = self.base.marginal(side);
        let map = self.base.component_map(side);
        let k = self.base.components.len();
        let mut sums = Matrix::<T>::zeros(k, k);
        for i in 0..n {
            for j in 0..n {
                sums[(map[i], map[j])] += kernel[(i, j)] * w[i] * w[j];
            }
        }
        let other = side.other();
        let target = self.base.component_map(other);
        let m = self.base.len(other);
        Ok(Matrix::from_fn(m, m, |x, y| {
            let (a, b) = (target[x], target[y]);
            sums[(a, b)] / (self.base.side_mass(a, side) * self.base.side_mass(b, side))
        }))
    }

    /// Largest `|k1(x₁, y₁) − k2(x₂, y₂)|` over the extended support.
    pub fn kernel_violation(
        &self,
        k1: &Matrix<T>,
        k2: &Matrix<T>,
    ) -> Result<(T, Option<((usize, usize), (usize, usize))>)> {
        let (n1, n2) = (self.base.left_len(), self.base.right_len());
        check_len("left kernel", n1, k1.rows())?;
        check_len("left kernel", n1, k1.cols())?;
        check_len("right kernel", n2, k2.rows())?;
        check_len("right kernel", n2, k2.cols())?;
        let edges: Vec<(usize, usize)> = (0..n1)
            .flat_map(|i| (0..n2).map(move |j| (i, j)))
            .filter(|&(i, j)| self.base.in_support(i, j))
            .collect();
        let mut worst = (T::zero(), None);
        for &(x1, x2) in &edges {
            for &(y1, y2) in &edges {
                let d = (k1[(x1, y1)] - k2[(x2, y2)]).abs();
                if d > worst.0 {
                    worst = (d, Some(((x1, y1), (x2, y2))));
                }
            }
        }
        Ok(worst)
    }

    pub fn is_kernel_conjugate(&self, k1: &Matrix<T>, k2: &Matrix<T>, tol: T) -> Result<bool> {
        Ok(self.kernel_violation(k1, k2)?.0 <= tol)
    }

    /// Builds the support graph of `π ⊗ π` on pairs and labels its components.
    ///
    /// Refuses sizes above [`EXPLICIT_EXTENDED_LIMIT`].
    pub fn explicit(&self) -> Result<ExplicitExtended> {
        let (n1, n2) = (self.base.left_len(), self.base.right_len());
        if n1.max(n2) > EXPLICIT_EXTENDED_LIMIT {
            return Err(Error::InvalidCoupling(format!(
                "explicit extended coupling limited to {EXPLICIT_EXTENDED_LIMIT} atoms per side"
            )));
        }
        let (p1, p2) = (n1 * n1, n2 * n2);
        let mut uf = UnionFind::<usize>::new(p1 + p2);
        for x1 in 0..n1 {
            for y1 in 0..n1 {
                for x2 in 0..n2 {
                    for y2 in 0..n2 {
                        if self.base.in_support(x1, x2) && self.base.in_support(y1, y2) {
                            uf.union(x1 * n1 + y1, p1 + x2 * n2 + y2);
                        }
                    }
                }
            }
        }
        let labels = uf.into_labeling();
        let mut ids = std::collections::HashMap::new();
        let mut id = |root: usize| {
            let next = ids.len();
            *ids.entry(root).or_insert(next)
        };
        let left = (0..p1).map(|p| id(labels[p])).collect();
        let right = (p1..p1 + p2).map(|p| id(labels[p])).collect();
        Ok(ExplicitExtended {
            left,
            right,
            count: ids.len(),
        })
    }
}

pub fn kernel_conjugate<T: Scalar>(e: &ExtendedCoupling<'_, T>, kernel: &Matrix<T>, side: Side) -> Result<Matrix<T>> {
    e.kernel_conjugate(kernel, side)
}

/// Outcome of one conjugacy check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome<T> {
    pub passed: bool,
    pub max_violation: T,
    /// `[left, right]` atoms for functions; `[[x₁, y₁], [x₂, y₂]]` for kernels.
    pub location: Option<serde_json::Value>,
}

/// Which parameter pairs of two coupled models are conjugate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjugacyReport<T> {
    pub gamma: CheckOutcome<T>,
    pub cost: CheckOutcome<T>,
    pub kernel: CheckOutcome<T>,
    /// The next-generation kernel `k / gamma`.
    pub ngo_kernel: CheckOutcome<T>,
}

impl<T: Scalar> ConjugacyReport<T> {
    pub fn all_passed(&self) -> bool {
        self.gamma.passed && self.cost.passed && self.kernel.passed && self.ngo_kernel.passed
    }

    /// Hypotheses for equality of reproduction numbers.
    pub fn re_equivalent(&self) -> bool {
        self.ngo_kernel.passed
    }

    /// Hypotheses for equality of equilibria and infected fractions.
    pub fn equilibria_equivalent(&self) -> bool {
        self.kernel.passed && self.gamma.passed
    }
}

/// Checks the conjugacy hypotheses on `gamma`, cost, `k` and `k / gamma`.
pub fn check_model_conjugacy<T: Scalar>(
    c: &Coupling<T>,
    left: &Model<T>,
    right: &Model<T>,
    tol: T,
) -> Result<ConjugacyReport<T>> {
    for (side, model) in [(Side::Left, left), (Side::Right, right)] {
        check_len("model size", c.len(side), model.n())?;
        if let Some((index, dev)) = max_deviation(c.marginal(side), model.weights()) {
            if dev > T::tol(MARGINAL_TOL) {
                return Err(Error::Marginal {
                    side: if side == Side::Left { "left" } else { "right" },
                    index,
                    deviation: dev.as_f64(),
                });
            }
        }
    }
    let function = |f1: &[T], f2: &[T]| -> Result<CheckOutcome<T>> {
        let (v, at) = c.conjugacy_violation(f1, f2)?;
        Ok(CheckOutcome {
            passed: v <= tol,
            max_violation: v,
            location: (v > tol).then(|| at.map(|(i, j)| serde_json::json!([i, j]))).flatten(),
        })
    };
    let ext = c.extended();
    let kernel = |k1: &Matrix<T>, k2: &Matrix<T>| -> Result<CheckOutcome<T>> {
        let (v, at) = ext.kernel_violation(k1, k2)?;
        Ok(CheckOutcome {
            passed: v <= tol,
            max_violation: v,
            location: (v > tol)
                .then(|| at.map(|(a, b)| serde_json::json!([[a.0, a.1], [b.0, b.1]])))
                .flatten(),
        })
    };
    Ok(ConjugacyReport {
        gamma: function(left.gamma(), right.gamma())?,
        cost: function(left.cost_density(), right.cost_density())?,
        kernel: kernel(left.kernel(), right.kernel())?,
        ngo_kernel: kernel(&left.ngo_kernel(), &right.ngo_kernel())?,
    })
}
