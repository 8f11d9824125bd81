//! Exact model reduction: merging features that behave identically.

use serde::{Deserialize, Serialize};

use crate::coupling::Coupling;
use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::model::{Model, Strategy};
use crate::scalar::Scalar;

pub const DEFAULT_REDUCE_TOL: f64 = 1e-9;
/// Blocks failing to merge by less than this multiple of the tolerance are reported.
pub const NEAR_MISS_FACTOR: f64 = 10.0;

/// Partition of the feature indices; blocks are the atoms of a sub-σ-field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FeaturePartition {
    blocks: Vec<Vec<usize>>,
    #[serde(skip)]
    block_of: Vec<usize>,
}

#[derive(Deserialize)]
struct PartitionFile {
    blocks: Vec<Vec<usize>>,
}

impl<'de> Deserialize<'de> for FeaturePartition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = PartitionFile::deserialize(d)?;
        let n = file.blocks.iter().map(Vec::len).sum();
        Self::new(file.blocks, n).map_err(serde::de::Error::custom)
    }
}

impl FeaturePartition {
    /// Checks that `blocks` are nonempty, disjoint and cover `0..n`.
    ///
    /// Blocks are sorted internally and ordered by their smallest index.
    pub fn new(mut blocks: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut block_of = vec![usize::MAX; n];
        for b in blocks.iter_mut() {
            if b.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            b.sort_unstable();
        }
        blocks.sort_by_key(|b| b[0]);
        for (k, b) in blocks.iter().enumerate() {
            for &i in b {
                if i >= n {
                    return Err(Error::InvalidPartition(format!("index {i} out of range for {n} features")));
                }
                if block_of[i] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("index {i} appears twice")));
                }
                block_of[i] = k;
            }
        }
        if let Some(i) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::InvalidPartition(format!("index {i} is not covered")));
        }
        Ok(Self { blocks, block_of })
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            blocks: (0..n).map(|i| vec![i]).collect(),
            block_of: (0..n).collect(),
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Number of features covered.
    pub fn len(&self) -> usize {
        self.block_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_of.is_empty()
    }

    pub fn block_of(&self, i: usize) -> usize {
        self.block_of[i]
    }

    /// The quotient map as a vector.
    pub fn quotient_map(&self) -> &[usize] {
        &self.block_of
    }

    pub fn is_singletons(&self) -> bool {
        self.blocks.len() == self.block_of.len()
    }
}

/// Two blocks that would merge if the tolerance were slightly larger.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NearMiss {
    pub block_a: usize,
    pub block_b: usize,
    pub quantity: &'static str,
    pub deviation: f64,
}

/// Largest deviation between features `i` and `j` as a merge candidate, and where.
fn feature_gap<T: Scalar>(model: &Model<T>, i: usize, j: usize) -> (T, &'static str) {
    let k = model.kernel();
    let mut worst = ((model.gamma()[i] - model.gamma()[j]).abs(), "gamma");
    let c = (model.cost_density()[i] - model.cost_density()[j]).abs();
    if c > worst.0 {
        worst = (c, "cost");
    }
    for x in 0..model.n() {
        let d = (k[(i, x)] - k[(j, x)]).abs().max((k[(x, i)] - k[(x, j)]).abs());
        if d > worst.0 {
            worst = (d, "kernel");
        }
    }
    worst
}

/// First violation of block-constancy for `p`, as (block_a, block_b, quantity, deviation).
fn first_violation<T: Scalar>(model: &Model<T>, p: &FeaturePartition, tol: T) -> Option<(usize, usize, &'static str, T)> {
    let blocks = p.blocks();
    for (a, block) in blocks.iter().enumerate() {
        let r = block[0];
        for (name, v) in [("gamma", model.gamma()), ("cost", model.cost_density())] {
            let dev = block.iter().map(|&i| (v[i] - v[r]).abs()).fold(T::zero(), T::max);
            if dev > tol {
                return Some((a, a, name, dev));
            }
        }
    }
    let k = model.kernel();
    for (a, ba) in blocks.iter().enumerate() {
        for (b, bb) in blocks.iter().enumerate() {
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            for &i in ba {
                for &j in bb {
                    lo = lo.min(k[(i, j)]);
                    hi = hi.max(k[(i, j)]);
                }
            }
            if hi - lo > tol {
                return Some((a, b, "kernel", hi - lo));
            }
        }
    }
    None
}

/// Checks that `gamma`, cost and kernel are constant on the blocks of `p`.
pub fn check_partition<T: Scalar>(model: &Model<T>, p: &FeaturePartition, tol: T) -> Result<()> {
    check_len("partition", model.n(), p.len())?;
    match first_violation(model, p, tol) {
        None => Ok(()),
        Some((block_a, block_b, quantity, dev)) => Err(Error::NotReducible {
            block_a,
            block_b,
            quantity,
            deviation: dev.as_f64(),
        }),
    }
}

/// Coarsest partition on which `gamma`, cost and kernel are block-constant.
///
/// Features are grouped greedily against block representatives, then any
/// block breaking joint kernel constancy is split until the partition is stable.
pub fn coarsest_reduction<T: Scalar>(model: &Model<T>, tol: T) -> FeaturePartition {
    let n = model.n();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match blocks.iter_mut().find(|b| feature_gap(model, b[0], i).0 <= tol) {
            Some(b) => b.push(i),
            None => blocks.push(vec![i]),
        }
    }
    loop {
        let p = FeaturePartition::new(blocks.clone(), n).expect("greedy grouping is a partition");
        let Some((a, b, _, _)) = first_violation(model, &p, tol) else {
            return p;
        };
        // peel off the member of the offending block farthest from its representative
        let victim = if p.blocks()[a].len() > 1 { a } else { b };
        let block = &p.blocks()[victim];
        let r = block[0];
        let far = *block[1..]
            .iter()
            .max_by(|&&x, &&y| feature_gap(model, r, x).0.partial_cmp(&feature_gap(model, r, y).0).unwrap())
            .expect("split block has two members");
        blocks = p.blocks().to_vec();
        blocks[victim].retain(|&i| i != far);
        blocks.push(vec![far]);
    }
}

/// Block pairs that fail to merge by less than `NEAR_MISS_FACTOR × tol`.
pub fn near_misses<T: Scalar>(model: &Model<T>, p: &FeaturePartition, tol: T) -> Vec<NearMiss> {
    let blocks = p.blocks();
    let limit = tol * T::lit(NEAR_MISS_FACTOR);
    let mut out = Vec::new();
    for a in 0..blocks.len() {
        for b in a + 1..blocks.len() {
            let (gap, quantity) = feature_gap(model, blocks[a][0], blocks[b][0]);
            if gap > tol && gap < limit {
                out.push(NearMiss {
                    block_a: a,
                    block_b: b,
                    quantity,
                    deviation: gap.as_f64(),
                });
            }
        }
    }
    out
}

fn block_mean<T: Scalar>(values: &[T], weights: &[T], block: &[usize]) -> T {
    let mass: T = block.iter().map(|&i| weights[i]).sum();
    block.iter().map(|&i| values[i] * weights[i]).sum::<T>() / mass
}

/// Quotient model with one feature per block, plus the deterministic coupling
/// along the quotient map.
pub fn reduce<T: Scalar>(model: &Model<T>, p: &FeaturePartition, tol: T) -> Result<(Model<T>, Coupling<T>)> {
    check_partition(model, p, tol)?;
    let w = model.weights();
    let blocks = p.blocks();
    let weights: Vec<T> = blocks.iter().map(|b| b.iter().map(|&i| w[i]).sum()).collect();
    let gamma = blocks.iter().map(|b| block_mean(model.gamma(), w, b)).collect();
    let cost = blocks.iter().map(|b| block_mean(model.cost_density(), w, b)).collect();
    let k = model.kernel();
    let kernel = Matrix::from_fn(blocks.len(), blocks.len(), |a, b| {
        let s: T = blocks[a]
            .iter()
            .flat_map(|&i| blocks[b].iter().map(move |&j| k[(i, j)] * w[i] * w[j]))
            .sum();
        s / (weights[a] * weights[b])
    });
    let mut reduced = Model::new(weights, gamma, kernel, cost)?;
    if let Some(labels) = model.labels() {
        let merged = blocks
            .iter()
            .map(|b| b.iter().map(|&i| labels[i].as_str()).collect::<Vec<_>>().join("+"))
            .collect();
        reduced = reduced.with_labels(merged)?;
    }
    let coupling = Coupling::deterministic(w, p.quotient_map(), reduced.weights())?;
    Ok((reduced, coupling))
}

/// Block-wise weighted mean: the conditional expectation of `eta` on the blocks.
pub fn reduce_strategy<T: Scalar>(model: &Model<T>, p: &FeaturePartition, eta: &Strategy<T>) -> Result<Strategy<T>> {
    check_len("partition", model.n(), p.len())?;
    check_len("strategy", model.n(), eta.len())?;
    Strategy::new(
        p.blocks()
            .iter()
            .map(|b| block_mean(eta.as_slice(), model.weights(), b))
            .collect(),
    )
}

/// Block-constant strategy taking the value `eta_red[B]` on block `B`.
pub fn lift_strategy<T: Scalar>(p: &FeaturePartition, eta_red: &Strategy<T>) -> Result<Strategy<T>> {
    check_len("reduced strategy", p.num_blocks(), eta_red.len())?;
    Strategy::new(p.quotient_map().iter().map(|&b| eta_red.as_slice()[b]).collect())
}
