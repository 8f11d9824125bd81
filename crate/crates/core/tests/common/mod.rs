#![allow(dead_code)]

use nalgebra::DMatrix;
use sis_core::coupling::Coupling;
use sis_core::{Matrix, Model};

pub fn scalar(k: f64, gamma: f64) -> Model<f64> {
    Model::new(vec![1.0], vec![gamma], Matrix::from_rows(vec![vec![k]]).unwrap(), vec![1.0]).unwrap()
}

pub fn sbm(p: f64, k: [[f64; 2]; 2]) -> Model<f64> {
    Model::new(
        vec![p, 1.0 - p],
        vec![1.0; 2],
        Matrix::from_rows(k.iter().map(|r| r.to_vec()).collect()).unwrap(),
        vec![1.0; 2],
    )
    .unwrap()
}

/// Splits every feature of `base` into sub-atoms: `phi[i]` is the parent of
/// sub-atom `i`, `share[i]` its fraction of the parent's weight.
pub fn blow_up(base: &Model<f64>, phi: &[usize], share: &[f64]) -> Model<f64> {
    let n = phi.len();
    let k = base.kernel();
    Model::new(
        (0..n).map(|i| base.weights()[phi[i]] * share[i]).collect(),
        phi.iter().map(|&a| base.gamma()[a]).collect(),
        Matrix::from_fn(n, n, |i, j| k[(phi[i], phi[j])]),
        phi.iter().map(|&a| base.cost_density()[a]).collect(),
    )
    .unwrap()
}

/// Spectral radius as the largest eigenvalue modulus from a dense eigensolver.
pub fn eig_radius(m: &Matrix<f64>) -> f64 {
    let n = m.rows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[(i, j)]);
    dm.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Support components by depth-first search, labelled in order of discovery
/// from left atom 0 upwards; returns (left labels, right labels).
pub fn dfs_components(c: &Coupling<f64>) -> (Vec<usize>, Vec<usize>) {
    let pi = c.pi();
    let (n1, n2) = (pi.rows(), pi.cols());
    let mut left = vec![usize::MAX; n1];
    let mut right = vec![usize::MAX; n2];
    let mut next = 0;
    for start in 0..n1 {
        if left[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![(true, start)];
        left[start] = next;
        while let Some((is_left, v)) = stack.pop() {
            if is_left {
                for j in 0..n2 {
                    if pi[(v, j)] > 0.0 && right[j] == usize::MAX {
                        right[j] = next;
                        stack.push((false, j));
                    }
                }
            } else {
                for i in 0..n1 {
                    if pi[(i, v)] > 0.0 && left[i] == usize::MAX {
                        left[i] = next;
                        stack.push((true, i));
                    }
                }
            }
        }
        next += 1;
    }
    (left, right)
}

/// `E[f(Z₁) | component]` evaluated at every right atom, summing joint masses directly.
pub fn brute_conjugate_left(c: &Coupling<f64>, f: &[f64]) -> Vec<f64> {
    let (left, right) = dfs_components(c);
    let pi = c.pi();
    (0..pi.cols())
        .map(|j| {
            let comp = right[j];
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..pi.rows() {
                for jj in 0..pi.cols() {
                    if left[i] == comp {
                        num += f[i] * pi[(i, jj)];
                        den += pi[(i, jj)];
                    }
                }
            }
            num / den
        })
        .collect()
}

/// `Σ_y k(x, y) v(y) w(y)`.
pub fn apply(k: &Matrix<f64>, v: &[f64], w: &[f64]) -> Vec<f64> {
    (0..k.rows())
        .map(|x| (0..k.cols()).map(|y| k[(x, y)] * v[y] * w[y]).sum())
        .collect()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `O(N²)` dominance scan: `true` where no other point is at least as good in
/// both objectives and strictly better in one (minimizing both when `minimize`).
pub fn pairwise_non_dominated(points: &[(f64, f64)], minimize: bool) -> Vec<bool> {
    let s = if minimize { 1.0 } else { -1.0 };
    points
        .iter()
        .map(|&(c, l)| {
            !points.iter().any(|&(c2, l2)| {
                let (dc, dl) = (s * (c2 - c), s * (l2 - l));
                dc <= 0.0 && dl <= 0.0 && (dc < 0.0 || dl < 0.0)
            })
        })
        .collect()
}

pub mod arb {
    use proptest::prelude::*;
    use sis_core::{Matrix, Model, Strategy as Eta};

    pub fn model(max_n: usize) -> impl proptest::strategy::Strategy<Value = Model<f64>> {
        (1..=max_n).prop_flat_map(|n| {
            (
                prop::collection::vec(0.1f64..1.0, n),
                prop::collection::vec(0.5f64..2.0, n),
                prop::collection::vec(0.0f64..4.0, n * n),
                prop::collection::vec(0.5f64..2.0, n),
            )
                .prop_map(move |(w, gamma, k, c)| {
                    let total: f64 = w.iter().sum();
                    Model::new(
                        w.iter().map(|x| x / total).collect(),
                        gamma,
                        Matrix::from_fn(n, n, |i, j| k[i * n + j]),
                        c,
                    )
                    .unwrap()
                })
        })
    }

    pub fn strategy(n: usize) -> impl proptest::strategy::Strategy<Value = Eta<f64>> {
        prop::collection::vec(0.0f64..=1.0, n).prop_map(|v| Eta::new(v).unwrap())
    }

    pub fn model_and_strategy(max_n: usize) -> impl proptest::strategy::Strategy<Value = (Model<f64>, Eta<f64>)> {
        model(max_n).prop_flat_map(|m| {
            let n = m.n();
            (Just(m), strategy(n))
        })
    }
}
