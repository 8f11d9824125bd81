//! Integral operators, next-generation matrices and Perron spectral data.
//!
//! The spectral radius of a nonnegative matrix is computed on its irreducible
//! blocks (strongly connected components of the support graph). Each block is
//! iterated with the shift `A + δI`, `δ` equal to the mean row sum, which makes
//! it primitive; the Collatz–Wielandt bracket `min (Ax)ᵢ/xᵢ ≤ ρ ≤ max (Ax)ᵢ/xᵢ`
//! certifies the radius. Perron vectors of the whole (possibly reducible)
//! matrix are then assembled from a basic block and its upstream blocks.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{check_len, Error, Result};
use crate::matrix::{solve, Matrix};
use crate::model::{Model, Strategy};
use crate::scalar::{sup_norm, Scalar};

/// Default Collatz–Wielandt bracket width, relative to `max(1, ρ)`.
pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelChoice {
    /// The transmission kernel `k`.
    Transmission,
    /// The next-generation kernel `k(i, j) / gamma(j)`.
    NextGeneration,
}

/// `out[i] = ∑ⱼ kernel(i, j) · eta[j] · g[j] · weights[j]`.
pub fn apply_kernel<T: Scalar>(
    model: &Model<T>,
    choice: KernelChoice,
    g: &[T],
    eta: &Strategy<T>,
) -> Result<Vec<T>> {
    let n = model.n();
    check_len("vector", n, g.len())?;
    model.check_strategy(eta)?;
    let k = model.kernel();
    let weighted: Vec<T> = (0..n)
        .map(|j| {
            let base = eta.as_slice()[j] * g[j] * model.weights()[j];
            match choice {
                KernelChoice::Transmission => base,
                KernelChoice::NextGeneration => base / model.gamma()[j],
            }
        })
        .collect();
    Ok(k.mul_vec(&weighted))
}

/// Effective next-generation matrix `M[i][j] = k(i, j) · eta[j] · weights[j] / gamma[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NextGenMatrix<T>(Matrix<T>);

impl<T: Scalar> NextGenMatrix<T> {
    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }
}

pub fn next_gen_matrix<T: Scalar>(model: &Model<T>, eta: &Strategy<T>) -> Result<NextGenMatrix<T>> {
    model.check_strategy(eta)?;
    let n = model.n();
    let col: Vec<T> = (0..n)
        .map(|j| eta.as_slice()[j] * model.weights()[j] / model.gamma()[j])
        .collect();
    Ok(NextGenMatrix(Matrix::from_fn(n, n, |i, j| {
        model.kernel()[(i, j)] * col[j]
    })))
}

#[derive(Clone, Copy, Debug)]
pub struct SpectralOptions<T> {
    pub tol: T,
    /// Iteration cap per block; `None` means `100 · n · ⌈−log₁₀ tol⌉`.
    pub max_iterations: Option<usize>,
}

impl<T: Scalar> Default for SpectralOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::tol(DEFAULT_SPECTRAL_TOL),
            max_iterations: None,
        }
    }
}

impl<T: Scalar> SpectralOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self {
            tol,
            max_iterations: None,
        }
    }

    fn cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or_else(|| {
            let digits = (-self.tol.as_f64().log10()).ceil().max(1.0) as usize;
            100 * n.max(1) * digits
        })
    }
}

/// Spectral radius with nonnegative right and left Perron vectors.
#[derive(Clone, Debug)]
pub struct Spectrum<T> {
    pub radius: T,
    /// `M v = ρ v`, normalized to sum 1.
    pub right: Vec<T>,
    /// `wᵀ M = ρ wᵀ`, normalized to sum 1.
    pub left: Vec<T>,
    /// `‖M v − ρ v‖∞`.
    pub right_residual: T,
    /// `‖Mᵀ w − ρ w‖∞`.
    pub left_residual: T,
    pub iterations: usize,
}

struct BlockPerron<T> {
    radius: T,
    vector: Vec<T>,
    iterations: usize,
}

struct Decomposition<T> {
    /// Strongly connected components, successors before predecessors.
    classes: Vec<Vec<usize>>,
    class_of: Vec<usize>,
    blocks: Vec<BlockPerron<T>>,
}

fn check_nonnegative<T: Scalar>(m: &Matrix<T>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotNonnegative(format!(
            "{}×{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if m.iter().any(|&x| !x.is_finite() || x < T::zero()) {
        return Err(Error::NotNonnegative("negative or non-finite entry".into()));
    }
    Ok(())
}

fn block_perron<T: Scalar>(
    m: &Matrix<T>,
    nodes: &[usize],
    opts: &SpectralOptions<T>,
) -> Result<BlockPerron<T>> {
    let s = nodes.len();
    if s == 1 {
        let i = nodes[0];
        return Ok(BlockPerron {
            radius: m[(i, i)],
            vector: vec![T::one()],
            iterations: 0,
        });
    }
    let block = Matrix::from_fn(s, s, |a, b| m[(nodes[a], nodes[b])]);
    let shift = block.row_sums().into_iter().sum::<T>() / T::lit(s as f64);
    let mut x = vec![T::one() / T::lit(s as f64); s];
    let mut previous = T::nan();
    let cap = opts.cap(m.rows());
    let mut gap = T::infinity();
    for it in 0..cap {
        let y = block.mul_vec(&x);
        let (mut lo, mut hi) = (T::infinity(), T::zero());
        for (&yi, &xi) in y.iter().zip(&x) {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let estimate = (lo + hi) / T::lit(2.0);
        let scale = T::one().max(hi);
        gap = hi - lo;
        if gap <= opts.tol * scale && (estimate - previous).abs() <= opts.tol * scale {
            return Ok(BlockPerron {
                radius: estimate,
                vector: x,
                iterations: it + 1,
            });
        }
        previous = estimate;
        let mut next: Vec<T> = y.iter().zip(&x).map(|(&yi, &xi)| yi + shift * xi).collect();
        let total: T = next.iter().copied().sum();
        next.iter_mut().for_each(|v| *v /= total);
        x = next;
    }
    Err(Error::SpectralNonConvergence {
        iterations: cap,
        gap: gap.as_f64(),
    })
}

fn decompose<T: Scalar>(m: &Matrix<T>, opts: &SpectralOptions<T>) -> Result<Decomposition<T>> {
    let n = m.rows();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if m[(i, j)] > T::zero() {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|x| x.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    // tarjan_scc yields classes in postorder; keep that order.
    classes.shrink_to_fit();
    let mut class_of = vec![0; n];
    for (c, members) in classes.iter().enumerate() {
        for &i in members {
            class_of[i] = c;
        }
    }
    let blocks = classes
        .iter()
        .map(|c| block_perron(m, c, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(Decomposition {
        classes,
        class_of,
        blocks,
    })
}

/// Spectral radius only (no eigenvectors).
pub fn spectral_radius_only<T: Scalar>(m: &Matrix<T>, opts: &SpectralOptions<T>) -> Result<T> {
    check_nonnegative(m)?;
    if m.rows() == 0 {
        return Ok(T::zero());
    }
    let d = decompose(m, opts)?;
    Ok(d.blocks.iter().fold(T::zero(), |acc, b| acc.max(b.radius)))
}

fn right_perron<T: Scalar>(m: &Matrix<T>, opts: &SpectralOptions<T>) -> Result<(T, Vec<T>, usize)> {
    let n = m.rows();
    let d = decompose(m, opts)?;
    let iterations = d.blocks.iter().map(|b| b.iterations).sum();
    let radius = d.blocks.iter().fold(T::zero(), |acc, b| acc.max(b.radius));
    let n_classes = d.classes.len();

    // ancestors[c][a]: class a reaches class c.
    let mut successors = vec![Vec::new(); n_classes];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (d.class_of[i], d.class_of[j]);
            if a != b && m[(i, j)] > T::zero() && !successors[a].contains(&b) {
                successors[a].push(b);
            }
        }
    }
    // classes are in postorder, so successors always precede their predecessors
    let mut reaches = vec![vec![false; n_classes]; n_classes];
    for a in 0..n_classes {
        reaches[a][a] = true;
        for &b in &successors[a] {
            for t in 0..n_classes {
                if reaches[b][t] {
                    reaches[a][t] = true;
                }
            }
        }
    }

    let tie = opts.tol * T::lit(16.0) * T::one().max(radius);
    let candidates: Vec<usize> = {
        let mut c: Vec<usize> = (0..n_classes)
            .filter(|&c| d.blocks[c].radius >= radius - tie)
            .collect();
        c.sort_by_key(|&c| d.classes[c][0]);
        c
    };
    let basic = *candidates
        .iter()
        .find(|&&c| !candidates.iter().any(|&o| o != c && reaches[o][c]))
        .expect("the class reachability order is acyclic");

    let mut v = vec![T::zero(); n];
    for (&i, &x) in d.classes[basic].iter().zip(&d.blocks[basic].vector) {
        v[i] = x;
    }
    for c in 0..n_classes {
        if c == basic || !reaches[c][basic] {
            continue;
        }
        let members = &d.classes[c];
        let s = members.len();
        let rhs: Vec<T> = members
            .iter()
            .map(|&i| {
                (0..n)
                    .filter(|&j| d.class_of[j] != c)
                    .map(|j| m[(i, j)] * v[j])
                    .sum()
            })
            .collect();
        let system = Matrix::from_fn(s, s, |a, b| {
            let diag = if a == b { radius } else { T::zero() };
            diag - m[(members[a], members[b])]
        });
        let x = solve(&system, &rhs).ok_or_else(|| Error::SpectralNonConvergence {
            iterations,
            gap: 0.0,
        })?;
        for (&i, xi) in members.iter().zip(x) {
            v[i] = xi.max(T::zero());
        }
    }
    let total: T = v.iter().copied().sum();
    v.iter_mut().for_each(|x| *x /= total);
    Ok((radius, v, iterations))
}

fn residual<T: Scalar>(m: &Matrix<T>, radius: T, v: &[T]) -> T {
    let mv = m.mul_vec(v);
    let diff: Vec<T> = mv.iter().zip(v).map(|(&a, &b)| a - radius * b).collect();
    sup_norm(&diff)
}

/// Spectral radius of a nonnegative square matrix, with Perron certificates.
pub fn spectral_radius<T: Scalar>(m: &Matrix<T>, opts: &SpectralOptions<T>) -> Result<Spectrum<T>> {
    check_nonnegative(m)?;
    if m.rows() == 0 {
        return Err(Error::Empty("matrix"));
    }
    let (radius, right, it_right) = right_perron(m, opts)?;
    let mt = m.transpose();
    let (_, left, it_left) = right_perron(&mt, opts)?;
    Ok(Spectrum {
        right_residual: residual(m, radius, &right),
        left_residual: residual(&mt, radius, &left),
        radius,
        right,
        left,
        iterations: it_right + it_left,
    })
}

/// Effective reproduction number `ρ(M(eta))`.
pub fn r_e<T: Scalar>(model: &Model<T>, eta: &Strategy<T>) -> Result<T> {
    r_e_with(model, eta, &SpectralOptions::default())
}

pub fn r_e_with<T: Scalar>(model: &Model<T>, eta: &Strategy<T>, opts: &SpectralOptions<T>) -> Result<T> {
    let m = next_gen_matrix(model, eta)?;
    spectral_radius_only(m.matrix(), opts)
}

/// Basic reproduction number, `r_e` without vaccination.
pub fn r0<T: Scalar>(model: &Model<T>) -> Result<T> {
    r_e(model, &Strategy::ones(model.n()))
}

/// `R₀` with its Perron certificates.
pub fn r0_spectrum<T: Scalar>(model: &Model<T>, opts: &SpectralOptions<T>) -> Result<Spectrum<T>> {
    re_spectrum(model, &Strategy::ones(model.n()), opts)
}

pub fn re_spectrum<T: Scalar>(
    model: &Model<T>,
    eta: &Strategy<T>,
    opts: &SpectralOptions<T>,
) -> Result<Spectrum<T>> {
    spectral_radius(next_gen_matrix(model, eta)?.matrix(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sbm() -> Model<f64> {
        Model::new(
            vec![0.5, 0.5],
            vec![1.0, 1.0],
            Matrix::from_rows(vec![vec![4.0, 1.0], vec![1.0, 2.0]]).unwrap(),
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    fn scalar(k: f64, gamma: f64) -> Model<f64> {
        Model::new(vec![1.0], vec![gamma], Matrix::from_rows(vec![vec![k]]).unwrap(), vec![1.0]).unwrap()
    }

    fn mat(rows: Vec<Vec<f64>>) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn apply_kernel_examples() {
        let m = scalar(3.0, 2.0);
        let one = Strategy::ones(1);
        assert_eq!(apply_kernel(&m, KernelChoice::NextGeneration, &[1.0], &one).unwrap(), vec![1.5]);
        assert_eq!(apply_kernel(&m, KernelChoice::Transmission, &[0.0], &one).unwrap(), vec![0.0]);
        let s = sbm();
        assert_eq!(
            apply_kernel(&s, KernelChoice::NextGeneration, &[1.0, 1.0], &Strategy::ones(2)).unwrap(),
            vec![2.5, 1.5]
        );
        assert!(apply_kernel(&s, KernelChoice::Transmission, &[1.0], &Strategy::ones(2)).is_err());
    }

    #[test]
    fn next_gen_matrix_examples() {
        let s = sbm();
        assert_eq!(
            next_gen_matrix(&s, &Strategy::ones(2)).unwrap().into_matrix(),
            mat(vec![vec![2.0, 0.5], vec![0.5, 1.0]])
        );
        assert_eq!(
            next_gen_matrix(&s, &Strategy::zeros(2)).unwrap().into_matrix(),
            Matrix::zeros(2, 2)
        );
        let eta = Strategy::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(
            next_gen_matrix(&s, &eta).unwrap().into_matrix(),
            mat(vec![vec![2.0, 0.0], vec![0.5, 0.0]])
        );
    }

    #[test]
    fn spectral_radius_examples() {
        let opts = SpectralOptions::default();
        let zero = spectral_radius(&Matrix::<f64>::zeros(3, 3), &opts).unwrap();
        assert_eq!(zero.radius, 0.0);
        let two = spectral_radius(&mat(vec![vec![2.0, 0.5], vec![0.5, 1.0]]), &opts).unwrap();
        assert!((two.radius - (3.0 + 2f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!(two.right_residual <= 1e-10 * two.radius);
        assert_eq!(spectral_radius(&mat(vec![vec![3.0]]), &opts).unwrap().radius, 3.0);
    }

    #[test]
    fn periodic_and_reducible_inputs() {
        let opts = SpectralOptions::default();
        let swap = spectral_radius(&mat(vec![vec![0.0, 1.0], vec![1.0, 0.0]]), &opts).unwrap();
        assert!((swap.radius - 1.0).abs() < 1e-12);
        // nilpotent: zeroed column with empty diagonal
        let nil = spectral_radius(&mat(vec![vec![0.0, 2.0], vec![0.0, 0.0]]), &opts).unwrap();
        assert_eq!(nil.radius, 0.0);
        assert!(nil.right_residual <= 1e-12 && nil.left_residual <= 1e-12);
        // Jordan block at the spectral radius
        let jordan = spectral_radius(&mat(vec![vec![1.0, 1.0], vec![0.0, 1.0]]), &opts).unwrap();
        assert!((jordan.radius - 1.0).abs() < 1e-12);
        assert!(jordan.right_residual <= 1e-10 && jordan.left_residual <= 1e-10);
        let tri = spectral_radius(&mat(vec![vec![1.0, 0.0], vec![3.0, 2.0]]), &opts).unwrap();
        assert!((tri.radius - 2.0).abs() < 1e-12);
        assert!(tri.right_residual <= 1e-10 && tri.left_residual <= 1e-10);
    }

    #[test]
    fn negative_entries_are_rejected() {
        let r = spectral_radius(&mat(vec![vec![-1.0]]), &SpectralOptions::default());
        assert!(matches!(r, Err(Error::NotNonnegative(_))));
    }

    #[test]
    fn r_e_examples() {
        let m = scalar(3.0, 1.0);
        assert_eq!(r0(&m).unwrap(), 3.0);
        assert_eq!(r_e(&m, &Strategy::zeros(1)).unwrap(), 0.0);
        let s = sbm();
        assert_eq!(r_e(&s, &Strategy::ones(2)).unwrap(), r0(&s).unwrap());
        // rank one kernel
        let c = 2.5;
        let flat = Model::new(
            vec![0.2, 0.3, 0.5],
            vec![2.0; 3],
            mat(vec![vec![c; 3]; 3]),
            vec![1.0; 3],
        )
        .unwrap();
        let eta = Strategy::new(vec![0.1, 0.7, 0.4]).unwrap();
        let expected = c / 2.0 * (0.1 * 0.2 + 0.7 * 0.3 + 0.4 * 0.5);
        assert!((r_e(&flat, &eta).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn single_precision_works() {
        let m: Matrix<f32> = Matrix::from_rows(vec![vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let s = spectral_radius(&m, &SpectralOptions::default()).unwrap();
        assert!((s.radius - 2.207_106_8).abs() < 1e-5);
    }
}
