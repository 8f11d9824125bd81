mod common;

use common::pairwise_non_dominated;
use proptest::prelude::*;
use sis_core::pareto::{
    enumerate_outcomes, frontier, frontier_with_tol, grid_frontier, non_dominated_mask, write_csv, EnumerateOptions,
    FrontierKind, LossKind, Outcome,
};
use sis_core::{Matrix, Model, Strategy as Eta};

fn cloud() -> impl proptest::strategy::Strategy<Value = Vec<Outcome<f64>>> {
    // small integer coordinates force plenty of exact ties
    prop::collection::vec((0u8..8, 0u8..8, 0.0f64..=1.0), 1..60).prop_map(|pts| {
        pts.into_iter()
            .map(|(c, l, e)| Outcome {
                cost: c as f64 / 4.0,
                loss: l as f64 / 2.0,
                strategy: Eta::new(vec![e]).unwrap(),
                loss_kind: LossKind::Re,
            })
            .collect()
    })
}

fn kinds() -> [FrontierKind; 2] {
    [FrontierKind::Pareto, FrontierKind::AntiPareto]
}

fn pts(o: &[Outcome<f64>]) -> Vec<(f64, f64)> {
    o.iter().map(|p| (p.cost, p.loss)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn mask_matches_pairwise_scan(out in cloud()) {
        for kind in kinds() {
            let oracle = pairwise_non_dominated(&pts(&out), kind == FrontierKind::Pareto);
            prop_assert_eq!(non_dominated_mask(&out, kind, 0.0), oracle);
        }
    }

    #[test]
    fn frontier_structure(out in cloud()) {
        for kind in kinds() {
            let f = frontier(&out, kind);
            prop_assert!(!f.is_empty());
            // idempotence
            prop_assert_eq!(&frontier(&f.points, kind).points, &f.points);
            // staircase: strictly increasing cost, strictly decreasing loss for both kinds
            for w in f.points.windows(2) {
                prop_assert!(w[0].cost < w[1].cost && w[0].loss > w[1].loss);
            }
            // every outcome is weakly dominated by (or, for anti, weakly dominates) a frontier point
            let s = if kind == FrontierKind::Pareto { 1.0 } else { -1.0 };
            for o in &out {
                prop_assert!(f.points.iter().any(|p| s * (p.cost - o.cost) <= 0.0 && s * (p.loss - o.loss) <= 0.0));
            }
            // ties keep the smallest strategy
            for p in &f.points {
                let smallest = out.iter()
                    .filter(|o| o.cost == p.cost && o.loss == p.loss)
                    .map(|o| o.strategy.as_slice()[0])
                    .fold(f64::INFINITY, f64::min);
                prop_assert_eq!(p.strategy.as_slice()[0], smallest);
            }
        }
    }

    #[test]
    fn tolerance_merges_near_ties(out in cloud(), eps in 1e-12f64..1e-10) {
        let jittered: Vec<Outcome<f64>> = out.iter().enumerate().map(|(i, o)| Outcome {
            cost: o.cost + if i % 2 == 0 { eps } else { 0.0 },
            loss: o.loss - if i % 3 == 0 { eps } else { 0.0 },
            ..o.clone()
        }).collect();
        for kind in kinds() {
            let exact = frontier(&out, kind);
            let fuzzy = frontier_with_tol(&jittered, kind, 1e-9);
            prop_assert_eq!(exact.len(), fuzzy.len());
        }
    }
}

fn homogeneous() -> Model<f64> {
    Model::new(vec![0.25, 0.75], vec![1.0; 2], Matrix::from_fn(2, 2, |_, _| 3.0), vec![1.0; 2]).unwrap()
}

#[test]
fn homogeneous_outcomes_lie_on_a_segment() {
    let m = homogeneous();
    let out = enumerate_outcomes(&m, LossKind::Re, 10, &EnumerateOptions::default()).unwrap();
    assert_eq!(out.len(), 121);
    for o in &out {
        assert!((o.loss - 3.0 * (1.0 - o.cost)).abs() <= 1e-12);
    }
    let p = frontier_with_tol(&out, FrontierKind::Pareto, 1e-12);
    let a = frontier_with_tol(&out, FrontierKind::AntiPareto, 1e-12);
    assert_eq!(pts(&p.points), pts(&a.points));
    // with single-weight multiples of 1/40 there are 41 distinct costs
    assert_eq!(p.len(), 41);
}

#[test]
fn sbm_staircase() {
    let m = common::sbm(0.5, [[4.0, 1.0], [1.0, 2.0]]);
    for loss in [LossKind::Re, LossKind::I] {
        for kind in kinds() {
            let f = grid_frontier(&m, loss, 20, kind, &EnumerateOptions::default()).unwrap();
            assert_eq!(frontier(&f.points, kind).points, f.points);
            assert_eq!(f.grid_resolution.unwrap().points, 441);
            assert!(f.points.first().unwrap().cost == 0.0 || kind == FrontierKind::AntiPareto);
        }
    }
    // the unvaccinated and fully vaccinated corners are always Pareto optimal
    let f = grid_frontier(&m, LossKind::Re, 20, FrontierKind::Pareto, &EnumerateOptions::default()).unwrap();
    assert_eq!(f.points.first().unwrap().strategy.as_slice(), &[1.0, 1.0]);
    assert_eq!(f.points.last().unwrap().strategy.as_slice(), &[0.0, 0.0]);
}

#[test]
fn csv_round_trips_values() {
    let m = common::sbm(0.3, [[4.0, 1.0], [1.0, 2.0]]);
    let f = grid_frontier(&m, LossKind::I, 8, FrontierKind::Pareto, &EnumerateOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_csv(&f, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("cost,loss,eta_0,eta_1"));
    for (line, p) in lines.zip(&f.points) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[0], p.cost);
        assert_eq!(v[1], p.loss);
        assert_eq!(&v[2..], p.strategy.as_slice());
    }
}
