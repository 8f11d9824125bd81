//! Seeded random generators for models, couplings and strategy pairs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coupling::{Coupling, Side};
use crate::matrix::Matrix;
use crate::model::{Model, Strategy};
use crate::scalar::Scalar;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn positive_weights<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> Vec<T> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| T::lit(w / total)).collect()
}

/// Random valid model: `gamma` and cost in `[0.5, 2]`, kernel entries in `[0, 4]`.
pub fn random_model<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> Model<T> {
    let weights = positive_weights(rng, n);
    let gamma = (0..n).map(|_| T::lit(rng.gen_range(0.5..2.0))).collect();
    let cost = (0..n).map(|_| T::lit(rng.gen_range(0.5..2.0))).collect();
    let kernel = Matrix::from_fn(n, n, |_, _| T::lit(rng.gen_range(0.0..4.0)));
    Model::new(weights, gamma, kernel, cost).expect("random parameters are valid")
}

pub fn random_strategy<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> Strategy<T> {
    Strategy::new((0..n).map(|_| T::lit(rng.gen::<f64>())).collect()).expect("values in [0, 1)")
}

/// Splits `0..n` into `k` nonempty groups, returned as a group label per index.
fn random_labels<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
    labels.shuffle(rng);
    labels
}

/// Random coupling of sizes `n1 × n2` with a random number of support components.
///
/// Each component gets a connected random support carrying positive mass.
pub fn random_coupling<T: Scalar, R: Rng>(rng: &mut R, n1: usize, n2: usize) -> Coupling<T> {
    let k = rng.gen_range(1..=n1.min(n2));
    let left = random_labels(rng, n1, k);
    let right = random_labels(rng, n2, k);
    let mut pi = vec![vec![0.0f64; n2]; n1];
    for c in 0..k {
        let ls: Vec<usize> = (0..n1).filter(|&i| left[i] == c).collect();
        let rs: Vec<usize> = (0..n2).filter(|&j| right[j] == c).collect();
        // a spanning star through the first atom of each side, plus random extra edges
        for (a, &i) in ls.iter().enumerate() {
            for (b, &j) in rs.iter().enumerate() {
                if a == 0 || b == 0 || rng.gen_bool(0.5) {
                    pi[i][j] = rng.gen_range(0.05..1.0);
                }
            }
        }
    }
    let total: f64 = pi.iter().flatten().sum();
    let pi = Matrix::from_fn(n1, n2, |i, j| T::lit(pi[i][j] / total));
    Coupling::from_pi(pi).expect("random coupling is valid")
}

/// Random models with conjugate `gamma`, cost and kernel along a random coupling.
pub fn conjugate_model_pair<T: Scalar, R: Rng>(rng: &mut R, n1: usize, n2: usize) -> (Model<T>, Model<T>, Coupling<T>) {
    let c = random_coupling::<T, R>(rng, n1, n2);
    let k = c.components().len();
    let gamma: Vec<T> = (0..k).map(|_| T::lit(rng.gen_range(0.5..2.0))).collect();
    let cost: Vec<T> = (0..k).map(|_| T::lit(rng.gen_range(0.5..2.0))).collect();
    let kernel = Matrix::from_fn(k, k, |_, _| T::lit(rng.gen_range(0.0..4.0)));
    let build = |side: Side| {
        let map = c.component_map(side);
        Model::new(
            c.marginal(side).to_vec(),
            map.iter().map(|&a| gamma[a]).collect(),
            Matrix::from_fn(map.len(), map.len(), |x, y| kernel[(map[x], map[y])]),
            map.iter().map(|&a| cost[a]).collect(),
        )
        .expect("conjugate parameters are valid")
    };
    (build(Side::Left), build(Side::Right), c)
}

/// A function on `side` constant on every component of `c`.
pub fn component_constant<T: Scalar, R: Rng>(rng: &mut R, c: &Coupling<T>, side: Side) -> Vec<T> {
    let values: Vec<T> = (0..c.components().len()).map(|_| T::lit(rng.gen_range(-2.0..2.0))).collect();
    c.component_map(side).iter().map(|&a| values[a]).collect()
}

/// Random strategies `(eta1, eta2)` sharing their component means, hence pre-conjugate.
pub fn preconjugate_strategies<T: Scalar, R: Rng>(rng: &mut R, c: &Coupling<T>) -> (Strategy<T>, Strategy<T>) {
    let eta1 = random_strategy::<T, R>(rng, c.left_len());
    let target = c.component_means(eta1.as_slice(), Side::Left).expect("sizes match");
    let mut u: Vec<T> = (0..c.right_len()).map(|_| T::lit(rng.gen::<f64>())).collect();
    let current = c.component_means(&u, Side::Right).expect("sizes match");
    let map = c.component_map(Side::Right);
    for (j, v) in u.iter_mut().enumerate() {
        let (a, ubar) = (target[map[j]], current[map[j]]);
        *v = if ubar <= T::zero() {
            a
        } else if ubar >= a {
            *v * a / ubar
        } else {
            T::one() - (T::one() - *v) * (T::one() - a) / (T::one() - ubar)
        };
        *v = v.max(T::zero()).min(T::one());
    }
    (eta1, Strategy::new(u).expect("values in [0, 1]"))
}

/// A random base model of size `n_base` blown up to `n_big` features by
/// splitting atoms; returns the big model, the base model and the quotient map.
pub fn planted_duplicates<T: Scalar, R: Rng>(rng: &mut R, n_base: usize, n_big: usize) -> (Model<T>, Model<T>, Vec<usize>) {
    let base = random_model::<T, R>(rng, n_base);
    let phi = random_labels(rng, n_big, n_base);
    let shares: Vec<f64> = (0..n_big).map(|_| rng.gen_range(0.1..1.0)).collect();
    let weights: Vec<T> = (0..n_big)
        .map(|i| {
            let total: f64 = (0..n_big).filter(|&j| phi[j] == phi[i]).map(|j| shares[j]).sum();
            base.weights()[phi[i]] * T::lit(shares[i] / total)
        })
        .collect();
    let k = base.kernel();
    let big = Model::new(
        weights,
        phi.iter().map(|&a| base.gamma()[a]).collect(),
        Matrix::from_fn(n_big, n_big, |i, j| k[(phi[i], phi[j])]),
        phi.iter().map(|&a| base.cost_density()[a]).collect(),
    )
    .expect("blow-up of a valid model is valid");
    (big, base, phi)
}
