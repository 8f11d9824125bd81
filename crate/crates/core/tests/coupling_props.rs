mod common;

use common::{brute_conjugate_left, dfs_components, max_diff};
use proptest::prelude::*;
use rand::Rng;
use sis_core::coupling::{build_coupling, check_model_conjugacy, Coupling, Side};
use sis_core::operator::r_e;
use sis_core::sampling::{self, rng};
use sis_core::{Matrix, Model};

fn sparse_pi(max_n: usize) -> impl proptest::strategy::Strategy<Value = Matrix<f64>> {
    (1..=max_n, 1..=max_n).prop_flat_map(|(n1, n2)| {
        prop::collection::vec(prop_oneof![2 => Just(0.0), 1 => 0.01f64..1.0], n1 * n2).prop_filter_map(
            "every atom needs mass",
            move |v| {
                let pi = Matrix::from_fn(n1, n2, |i, j| v[i * n2 + j]);
                let ok = pi.row_sums().iter().chain(pi.col_sums().iter()).all(|&s| s > 0.0);
                let total: f64 = v.iter().sum();
                ok.then(|| pi.scale(1.0 / total))
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn components_match_graph_search(pi in sparse_pi(7)) {
        let c = Coupling::from_pi(pi).unwrap();
        let (left, right) = dfs_components(&c);
        prop_assert_eq!(c.component_map(Side::Left), &left[..]);
        prop_assert_eq!(c.component_map(Side::Right), &right[..]);
        let total: f64 = c.components().iter().map(|k| k.mass).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(c.components().iter().all(|k| k.mass > 0.0));
    }

    #[test]
    fn conjugate_matches_direct_summation(pi in sparse_pi(6), seed in any::<u64>()) {
        let c = Coupling::from_pi(pi).unwrap();
        let mut r = rng(seed);
        let f: Vec<f64> = (0..c.left_len()).map(|_| r.gen_range(-3.0..3.0)).collect();
        let fast = c.conjugate(&f, Side::Left).unwrap();
        prop_assert!(max_diff(&fast, &brute_conjugate_left(&c, &f)) <= 1e-12);
        // the transposed coupling conjugates the other way
        let back = c.transpose().conjugate(&f, Side::Right).unwrap();
        prop_assert!(max_diff(&fast, &back) <= 1e-12);
    }

    #[test]
    fn edge_scan_agrees_with_definition(pi in sparse_pi(6), seed in any::<u64>()) {
        let c = Coupling::from_pi(pi).unwrap();
        let mut r = rng(seed);
        let f1 = sampling::component_constant(&mut r, &c, Side::Left);
        let f2 = c.conjugate(&f1, Side::Left).unwrap();
        prop_assert!(c.is_conjugate(&f1, &f2, 1e-12).unwrap());
        prop_assert!(c.is_conjugate_by_definition(&f1, &f2, 1e-12).unwrap());
        let g: Vec<f64> = (0..c.right_len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        prop_assert_eq!(
            c.is_conjugate(&f1, &g, 1e-10).unwrap(),
            c.is_conjugate_by_definition(&f1, &g, 1e-10).unwrap()
        );
    }
}

#[test]
fn reproduction_numbers_agree_under_next_generation_conjugacy_alone() {
    let mut r = rng(41);
    for _ in 0..100 {
        let (n1, n2) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let (m1, m2, c) = sampling::conjugate_model_pair::<f64, _>(&mut r, n1, n2);
        // rescale recovery per right atom while keeping k / gamma fixed
        let s: Vec<f64> = (0..n2).map(|_| r.gen_range(0.5..2.0)).collect();
        let k = m2.kernel();
        let m2 = Model::new(
            m2.weights().to_vec(),
            m2.gamma().iter().zip(&s).map(|(g, f)| g * f).collect(),
            Matrix::from_fn(n2, n2, |x, y| k[(x, y)] * s[y]),
            m2.cost_density().to_vec(),
        )
        .unwrap();
        let report = check_model_conjugacy(&c, &m1, &m2, 1e-10).unwrap();
        assert!(report.ngo_kernel.passed && report.re_equivalent());
        let (e1, e2) = sampling::preconjugate_strategies(&mut r, &c);
        let d = (r_e(&m1, &e1).unwrap() - r_e(&m2, &e2).unwrap()).abs();
        assert!(d <= 1e-8, "{d:e}");
    }
}

#[test]
fn deterministic_couplings_compose() {
    let mut r = rng(42);
    for _ in 0..50 {
        let (na, nb, nc) = (6, 4, 2);
        let phi: Vec<usize> = (0..na).map(|i| if i < nb { i } else { r.gen_range(0..nb) }).collect();
        let psi: Vec<usize> = (0..nb).map(|i| if i < nc { i } else { r.gen_range(0..nc) }).collect();
        let wa: Vec<f64> = {
            let raw: Vec<f64> = (0..na).map(|_| r.gen_range(0.1..1.0)).collect();
            let t: f64 = raw.iter().sum();
            raw.iter().map(|x| x / t).collect()
        };
        let push = |w: &[f64], map: &[usize], n: usize| {
            let mut out = vec![0.0; n];
            for (i, &j) in map.iter().enumerate() {
                out[j] += w[i];
            }
            out
        };
        let wb = push(&wa, &phi, nb);
        let wc = push(&wb, &psi, nc);
        let ab = Coupling::deterministic(&wa, &phi, &wb).unwrap();
        let bc = Coupling::deterministic(&wb, &psi, &wc).unwrap();
        let composed: Vec<usize> = phi.iter().map(|&b| psi[b]).collect();
        let ac = Coupling::deterministic(&wa, &composed, &wc).unwrap();
        let f: Vec<f64> = (0..nc).map(|_| r.gen_range(-1.0..1.0)).collect();
        let direct = ac.conjugate(&f, Side::Right).unwrap();
        let stepwise = ab.conjugate(&bc.conjugate(&f, Side::Right).unwrap(), Side::Right).unwrap();
        let by_map: Vec<f64> = composed.iter().map(|&c| f[c]).collect();
        assert!(max_diff(&direct, &stepwise) <= 1e-14);
        assert!(max_diff(&direct, &by_map) <= 1e-14);
        // and the image of a left function is its fiber average
        let g: Vec<f64> = (0..na).map(|_| r.gen_range(-1.0..1.0)).collect();
        let avg = ab.conjugate(&g, Side::Left).unwrap();
        for b in 0..nb {
            let (num, den) = (0..na)
                .filter(|&i| phi[i] == b)
                .fold((0.0, 0.0), |(n, d), i| (n + g[i] * wa[i], d + wa[i]));
            assert!((avg[b] - num / den).abs() <= 1e-14);
        }
    }
}

#[test]
fn rank_one_kernels_conjugate_factorwise() {
    let mut r = rng(43);
    for _ in 0..50 {
        let c: Coupling<f64> = sampling::random_coupling(&mut r, 3, 3);
        let f = sampling::component_constant(&mut r, &c, Side::Left);
        let g = sampling::component_constant(&mut r, &c, Side::Left);
        let k = Matrix::from_fn(3, 3, |x, y| f[x] * g[y]);
        let ks = c.extended().kernel_conjugate(&k, Side::Left).unwrap();
        let (fs, gs) = (c.conjugate(&f, Side::Left).unwrap(), c.conjugate(&g, Side::Left).unwrap());
        assert!(ks.max_abs_diff(&Matrix::from_fn(3, 3, |x, y| fs[x] * gs[y])) <= 1e-12);
    }
}

#[test]
fn blowup_pair_checks() {
    let base = common::sbm(0.5, [[4.0, 1.0], [1.0, 2.0]]);
    let big = common::blow_up(&base, &[0, 0, 1, 1], &[0.5; 4]);
    let c = sis_core::coupling::deterministic_coupling(&big, &base, &[0, 0, 1, 1]).unwrap();
    let report = check_model_conjugacy(&c, &big, &base, 1e-12).unwrap();
    assert!(report.all_passed());

    let mut k = big.kernel().clone();
    k[(1, 2)] += 0.1;
    let perturbed = big.with_kernel(k).unwrap();
    let report = check_model_conjugacy(&c, &perturbed, &base, 1e-12).unwrap();
    assert!(!report.kernel.passed && report.gamma.passed && report.cost.passed);
    assert!((report.kernel.max_violation - 0.1).abs() < 1e-12);
    assert_eq!(report.kernel.location, Some(serde_json::json!([[1, 2], [0, 1]])));

    let pi = c.pi().clone();
    let shifted = Model::new(vec![0.4, 0.6], vec![1.0; 2], base.kernel().clone(), vec![1.0; 2]).unwrap();
    assert!(matches!(
        build_coupling(&big, &shifted, pi),
        Err(sis_core::Error::Marginal { side: "right", .. })
    ));
}

#[test]
fn single_precision_conjugation() {
    let pi = Matrix::<f32>::from_rows(vec![vec![0.25, 0.0], vec![0.25, 0.0], vec![0.0, 0.5]]).unwrap();
    let c = Coupling::from_pi(pi).unwrap();
    assert_eq!(c.conjugate(&[2.0f32, 4.0, 6.0], Side::Left).unwrap(), vec![3.0f32, 6.0]);
    assert!(c.is_preconjugate(&[2.0f32, 4.0, 6.0], &[3.0, 6.0], 1e-6).unwrap());
}
