//! Model parameters, vaccination strategies and the affine vaccination cost.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Weight sums within this distance of 1 are accepted as they are.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Weight sums within this distance of 1 are silently rescaled (with a log warning).
pub const WEIGHT_RENORMALIZE_TOL: f64 = 1e-9;
/// Strategy entries this far outside `[0, 1]` are clamped instead of rejected.
pub const STRATEGY_CLAMP_TOL: f64 = 1e-12;

/// On-disk form of a model.
///
/// `kernel[i][j]` is the rate at which infected individuals of feature `j`
/// infect susceptible individuals of feature `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelData<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub weights: Vec<T>,
    pub gamma: Vec<T>,
    pub cost: Vec<T>,
    pub kernel: Vec<Vec<T>>,
}

/// One broken model invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Empty,
    Length {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    KernelRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    NotFinite {
        field: &'static str,
        index: (usize, Option<usize>),
    },
    WeightSum {
        sum: f64,
    },
    ZeroWeight {
        index: usize,
    },
    NegativeWeight {
        index: usize,
        value: f64,
    },
    GammaNotPositive {
        index: usize,
        value: f64,
    },
    NegativeKernel {
        row: usize,
        col: usize,
        value: f64,
    },
    NegativeCost {
        index: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "model has no features"),
            Violation::Length {
                field,
                expected,
                found,
            } => write!(f, "{field} has length {found}, expected {expected}"),
            Violation::KernelRow {
                row,
                expected,
                found,
            } => write!(f, "kernel row {row} has length {found}, expected {expected}"),
            Violation::NotFinite { field, index } => match index {
                (i, None) => write!(f, "{field}[{i}] is not finite"),
                (i, Some(j)) => write!(f, "{field}[{i}][{j}] is not finite"),
            },
            Violation::WeightSum { sum } => write!(f, "weights sum to {sum} ≠ 1"),
            Violation::ZeroWeight { index } => {
                write!(f, "weights[{index}] is zero (atoms must have positive mass)")
            }
            Violation::NegativeWeight { index, value } => {
                write!(f, "weights[{index}] = {value} is negative")
            }
            Violation::GammaNotPositive { index, value } => {
                write!(f, "gamma[{index}] not strictly positive ({value})")
            }
            Violation::NegativeKernel { row, col, value } => {
                write!(f, "kernel[{row}][{col}] = {value} is negative")
            }
            Violation::NegativeCost { index, value } => {
                write!(f, "cost[{index}] = {value} is negative")
            }
        }
    }
}

/// Every violated invariant of a candidate model; empty means valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl<T: Scalar> ModelData<T> {
    /// Checks every structural invariant and reports all violations at once.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n = self.weights.len();
        if n == 0 {
            violations.push(Violation::Empty);
            return ValidationReport { violations };
        }
        for (field, len) in [("gamma", self.gamma.len()), ("cost", self.cost.len())] {
            if len != n {
                violations.push(Violation::Length {
                    field,
                    expected: n,
                    found: len,
                });
            }
        }
        if self.kernel.len() != n {
            violations.push(Violation::Length {
                field: "kernel",
                expected: n,
                found: self.kernel.len(),
            });
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                violations.push(Violation::Length {
                    field: "labels",
                    expected: n,
                    found: labels.len(),
                });
            }
        }
        for (row, r) in self.kernel.iter().enumerate() {
            if r.len() != n {
                violations.push(Violation::KernelRow {
                    row,
                    expected: n,
                    found: r.len(),
                });
            }
        }

        let mut all_finite = true;
        for (field, values) in [
            ("weights", &self.weights),
            ("gamma", &self.gamma),
            ("cost", &self.cost),
        ] {
            for (i, x) in values.iter().enumerate() {
                if !x.is_finite() {
                    all_finite = false;
                    violations.push(Violation::NotFinite {
                        field,
                        index: (i, None),
                    });
                }
            }
        }
        for (i, r) in self.kernel.iter().enumerate() {
            for (j, x) in r.iter().enumerate() {
                if !x.is_finite() {
                    violations.push(Violation::NotFinite {
                        field: "kernel",
                        index: (i, Some(j)),
                    });
                } else if *x < T::zero() {
                    violations.push(Violation::NegativeKernel {
                        row: i,
                        col: j,
                        value: x.as_f64(),
                    });
                }
            }
        }

        for (i, &w) in self.weights.iter().enumerate() {
            if w == T::zero() {
                violations.push(Violation::ZeroWeight { index: i });
            } else if w < T::zero() {
                violations.push(Violation::NegativeWeight {
                    index: i,
                    value: w.as_f64(),
                });
            }
        }
        if all_finite {
            let sum: T = self.weights.iter().copied().sum();
            if (sum - T::one()).abs() > T::tol(WEIGHT_RENORMALIZE_TOL) {
                violations.push(Violation::WeightSum { sum: sum.as_f64() });
            }
        }
        for (i, &g) in self.gamma.iter().enumerate() {
            if g.is_finite() && !(g > T::zero()) {
                violations.push(Violation::GammaNotPositive {
                    index: i,
                    value: g.as_f64(),
                });
            }
        }
        for (i, &c) in self.cost.iter().enumerate() {
            if c < T::zero() {
                violations.push(Violation::NegativeCost {
                    index: i,
                    value: c.as_f64(),
                });
            }
        }
        ValidationReport { violations }
    }
}

/// A validated SIS model on a finite feature space.
///
/// Immutable once built; every accessor borrows.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    weights: Vec<T>,
    gamma: Vec<T>,
    kernel: Matrix<T>,
    cost: Vec<T>,
    labels: Option<Vec<String>>,
}

impl<T: Scalar> Model<T> {
    pub fn new(weights: Vec<T>, gamma: Vec<T>, kernel: Matrix<T>, cost: Vec<T>) -> Result<Self> {
        Self::from_data(ModelData {
            labels: None,
            weights,
            gamma,
            cost,
            kernel: kernel.to_rows(),
        })
    }

    /// Validates `data`; weight sums off by at most `1e-9` are rescaled.
    pub fn from_data(data: ModelData<T>) -> Result<Self> {
        let report = data.validate();
        if !report.is_ok() {
            return Err(Error::InvalidModel(report));
        }
        let ModelData {
            labels,
            mut weights,
            gamma,
            cost,
            kernel,
        } = data;
        let sum: T = weights.iter().copied().sum();
        if (sum - T::one()).abs() > T::tol(WEIGHT_SUM_TOL) {
            log::warn!("weights sum to {sum}; renormalizing");
            weights.iter_mut().for_each(|w| *w /= sum);
        }
        Ok(Self {
            weights,
            gamma,
            kernel: Matrix::from_rows(kernel)?,
            cost,
            labels,
        })
    }

    pub fn to_data(&self) -> ModelData<T> {
        ModelData {
            labels: self.labels.clone(),
            weights: self.weights.clone(),
            gamma: self.gamma.clone(),
            cost: self.cost.clone(),
            kernel: self.kernel.to_rows(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_len("labels", self.n(), labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    /// Same model with a different transmission kernel.
    pub fn with_kernel(&self, kernel: Matrix<T>) -> Result<Self> {
        Self::new(
            self.weights.clone(),
            self.gamma.clone(),
            kernel,
            self.cost.clone(),
        )
        .map(|m| Self {
            labels: self.labels.clone(),
            ..m
        })
    }

    /// Same model with a different cost density.
    pub fn with_cost(&self, cost: Vec<T>) -> Result<Self> {
        let mut data = self.to_data();
        data.cost = cost;
        Self::from_data(data)
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn gamma(&self) -> &[T] {
        &self.gamma
    }

    pub fn kernel(&self) -> &Matrix<T> {
        &self.kernel
    }

    pub fn cost_density(&self) -> &[T] {
        &self.cost
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// The next-generation kernel `k(i, j) / gamma(j)`.
    pub fn ngo_kernel(&self) -> Matrix<T> {
        Matrix::from_fn(self.n(), self.n(), |i, j| self.kernel[(i, j)] / self.gamma[j])
    }

    /// Total cost of vaccinating everybody, `∑ cost·weights`.
    pub fn max_cost(&self) -> T {
        self.cost.iter().zip(&self.weights).map(|(&c, &w)| c * w).sum()
    }

    pub(crate) fn check_strategy(&self, eta: &Strategy<T>) -> Result<()> {
        check_len("strategy", self.n(), eta.len())
    }
}

impl<T: Scalar> TryFrom<ModelData<T>> for Model<T> {
    type Error = Error;
    fn try_from(data: ModelData<T>) -> Result<Self> {
        Self::from_data(data)
    }
}

/// Proportion of NON-vaccinated individuals in each feature, in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Strategy<T>(Vec<T>);

impl<T: Scalar> Strategy<T> {
    /// Entries within `1e-12` of the unit interval are clamped, others rejected.
    pub fn new(values: Vec<T>) -> Result<Self> {
        let slack = T::tol(STRATEGY_CLAMP_TOL);
        let mut values = values;
        for (i, x) in values.iter_mut().enumerate() {
            if !x.is_finite() || *x < -slack || *x > T::one() + slack {
                return Err(Error::InvalidStrategy(format!(
                    "eta[{i}] = {x} is outside [0, 1]"
                )));
            }
            *x = x.max(T::zero()).min(T::one());
        }
        Ok(Self(values))
    }

    pub fn constant(n: usize, value: T) -> Result<Self> {
        Self::new(vec![value; n])
    }

    /// No vaccination.
    pub fn ones(n: usize) -> Self {
        Self(vec![T::one(); n])
    }

    /// Everybody vaccinated.
    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    /// Componentwise product, which stays in `[0, 1]`.
    pub fn hadamard(&self, other: &[T]) -> Result<Self> {
        check_len("strategy product", self.len(), other.len())?;
        Self::new(self.0.iter().zip(other).map(|(&a, &b)| a * b).collect())
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Strategy<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<T>::deserialize(d)?;
        Strategy::new(values).map_err(serde::de::Error::custom)
    }
}

impl<T> AsRef<[T]> for Strategy<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

/// Vaccination cost `∑ (1 − eta[i]) · cost[i] · weights[i]`.
pub fn cost<T: Scalar>(model: &Model<T>, eta: &Strategy<T>) -> Result<T> {
    model.check_strategy(eta)?;
    Ok(eta
        .as_slice()
        .iter()
        .zip(model.cost_density())
        .zip(model.weights())
        .map(|((&e, &c), &w)| (T::one() - e) * c * w)
        .sum())
}

/// Rewrites a model so that recovery rates and cost density become uniform.
///
/// The new weights are `cost · weights` and the new kernel is
/// `k(i, j) / (cost(j) · gamma(j))`: both factors divide the infector argument,
/// which leaves the next-generation matrix entrywise unchanged. The cost
/// density must be positive and integrate to one against the weights.
pub fn normalize<T: Scalar>(model: &Model<T>) -> Result<Model<T>> {
    if let Some(i) = model.cost_density().iter().position(|&c| !(c > T::zero())) {
        return Err(Error::Normalize(format!(
            "cost[{i}] is zero; the cost density must be bounded away from zero"
        )));
    }
    let total = model.max_cost();
    if (total - T::one()).abs() > T::tol(WEIGHT_RENORMALIZE_TOL) {
        return Err(Error::Normalize(format!(
            "cost density integrates to {total}, expected 1; rescale the cost first"
        )));
    }
    let n = model.n();
    let weights: Vec<T> = model
        .cost_density()
        .iter()
        .zip(model.weights())
        .map(|(&c, &w)| c * w / total)
        .collect();
    let kernel = Matrix::from_fn(n, n, |i, j| {
        model.kernel()[(i, j)] / (model.cost_density()[j] * model.gamma()[j])
    });
    let mut data = ModelData {
        labels: model.labels.clone(),
        weights,
        gamma: vec![T::one(); n],
        cost: vec![T::one(); n],
        kernel: kernel.to_rows(),
    };
    // rounding in c·w must not trip the renormalization warning
    let sum: T = data.weights.iter().copied().sum();
    data.weights.iter_mut().for_each(|w| *w /= sum);
    Model::from_data(data)
}
