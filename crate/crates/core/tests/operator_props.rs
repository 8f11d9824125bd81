mod common;

use common::{arb, eig_radius};
use proptest::prelude::*;
use sis_core::operator::{next_gen_matrix, r0, r_e, spectral_radius, SpectralOptions};
use sis_core::{Matrix, Strategy as Eta};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 200,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn nonnegative(max_n: usize) -> impl proptest::strategy::Strategy<Value = Matrix<f64>> {
    (2..=max_n).prop_flat_map(|n| {
        // roughly a third of the entries are zero, giving reducible and periodic patterns
        prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..5.0, 0.0f64..5.0], n * n)
            .prop_map(move |v| Matrix::from_fn(n, n, |i, j| v[i * n + j]))
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn radius_matches_dense_eigensolver(m in nonnegative(6)) {
        let s = spectral_radius(&m, &SpectralOptions::default()).unwrap();
        let oracle = eig_radius(&m);
        prop_assert!((s.radius - oracle).abs() <= 1e-8 * oracle.max(1.0), "{} vs {}", s.radius, oracle);
    }

    #[test]
    fn certificates_are_tight(m in nonnegative(6)) {
        let s = spectral_radius(&m, &SpectralOptions::default()).unwrap();
        let bound = 1e-10 * s.radius.max(1.0);
        prop_assert!(s.right_residual <= bound && s.left_residual <= bound,
            "residuals {:e} {:e}", s.right_residual, s.left_residual);
        prop_assert!(s.right.iter().chain(&s.left).all(|&x| x >= 0.0));
    }

    #[test]
    fn monotone_in_strategy((m, a) in arb::model_and_strategy(6), shrink in prop::collection::vec(0.0f64..=1.0, 6)) {
        let lower = Eta::new(a.as_slice().iter().zip(&shrink).map(|(x, s)| x * s).collect()).unwrap();
        prop_assert!(r_e(&m, &lower).unwrap() <= r_e(&m, &a).unwrap() + 1e-10);
    }

    #[test]
    fn scale_equivariant((m, eta) in arb::model_and_strategy(6), lambda in 0.1f64..10.0) {
        let scaled = m.with_kernel(m.kernel().scale(lambda)).unwrap();
        let (a, b) = (r_e(&m, &eta).unwrap(), r_e(&scaled, &eta).unwrap());
        prop_assert!((b - lambda * a).abs() <= 1e-10 * (lambda * a).max(1.0), "{b} vs {}", lambda * a);
    }

    #[test]
    fn bounded_by_r0((m, eta) in arb::model_and_strategy(6)) {
        let re = r_e(&m, &eta).unwrap();
        prop_assert!(re >= 0.0 && re <= r0(&m).unwrap() + 1e-10);
    }
}

#[test]
fn two_by_two_quadratic_oracle() {
    let mut r = sis_core::sampling::rng(5);
    for _ in 0..200 {
        let v: Vec<f64> = (0..4).map(|_| rand::Rng::gen_range(&mut r, 0.0..3.0)).collect();
        let m = Matrix::from_fn(2, 2, |i, j| v[2 * i + j]);
        let (tr, det) = (v[0] + v[3], v[0] * v[3] - v[1] * v[2]);
        let oracle = (tr + (tr * tr - 4.0 * det).max(0.0).sqrt()) / 2.0;
        let s = spectral_radius(&m, &SpectralOptions::default()).unwrap();
        assert!((s.radius - oracle).abs() <= 1e-10 * oracle.max(1.0), "{m:?}: {} vs {oracle}", s.radius);
    }
}

#[test]
fn next_gen_entries() {
    let mut r = sis_core::sampling::rng(6);
    for _ in 0..20 {
        let m: sis_core::Model<f64> = sis_core::sampling::random_model(&mut r, 4);
        let eta: Eta<f64> = sis_core::sampling::random_strategy(&mut r, 4);
        let ng = next_gen_matrix(&m, &eta).unwrap().into_matrix();
        for i in 0..4 {
            for j in 0..4 {
                let expected = m.kernel()[(i, j)] * eta.as_slice()[j] * m.weights()[j] / m.gamma()[j];
                assert!((ng[(i, j)] - expected).abs() <= 1e-15 * expected.max(1.0));
            }
        }
        assert!((r_e(&m, &eta).unwrap() - eig_radius(&ng)).abs() <= 1e-8);
    }
}
