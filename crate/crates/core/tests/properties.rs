mod common;

use proptest::prelude::*;
use rand::Rng;
use radvi_core::basis::{Dictionary, Weights};
use radvi_core::gram::GramMatrix;
use radvi_core::linalg::Mat;
use radvi_core::metrics::{empirical_w2_squared, snis_from_log_weights};
use radvi_core::oracles::Pchip;
use radvi_core::projection::project_nonneg_q;
use radvi_core::specfun::{chi_squared_cdf, upper_incomplete_gamma};
use radvi_core::targets::{build_target, Family, TargetSpec};

fn dict_strategy() -> impl Strategy<Value = Dictionary<f64>> {
    (2usize..60, 0.001f64..2.0).prop_map(|(d, alpha)| Dictionary::with_defaults(d, alpha).unwrap())
}

fn weights_for(dict: &Dictionary<f64>, seed: u64, scale: f64) -> Weights<f64> {
    let mut r = common::rng(seed);
    Weights::new((0..dict.len()).map(|_| scale * r.random::<f64>()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn radial_map_is_affine_and_monotone_in_weights(dict in dict_strategy(), seed: u64, r in 0.0f64..20.0) {
        let a = weights_for(&dict, seed, 3.0);
        let b = weights_for(&dict, seed.wrapping_add(1), 3.0);
        let sum = Weights::new(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x + y).collect()).unwrap();
        let (ga, gb, gs) = (dict.radial_value(&a, r), dict.radial_value(&b, r), dict.radial_value(&sum, r));
        prop_assert!((gs - (ga + gb - dict.alpha() * r)).abs() <= 1e-12 * (1.0 + gs.abs()));
        prop_assert!(gs >= ga && gs >= gb);
        prop_assert_eq!(dict.radial_value(&a, 0.0), 0.0);
    }

    #[test]
    fn log_det_is_finite_on_the_feasible_set(dict in dict_strategy(), seed: u64, r in 1e-6f64..50.0, zero_mask: u64) {
        let w = weights_for(&dict, seed, 5.0);
        let masked: Vec<f64> = w.as_slice().iter().enumerate()
            .map(|(i, &v)| if zero_mask >> (i % 64) & 1 == 1 { 0.0 } else { v })
            .collect();
        let w = Weights::new(masked).unwrap();
        prop_assert!(dict.log_det_jacobian(&w, r).is_finite());
    }

    #[test]
    fn radial_inverse_round_trips(dict in dict_strategy(), seed: u64, r in 0.0f64..30.0) {
        let w = weights_for(&dict, seed, 2.0);
        let back = dict.invert_radial(&w, dict.radial_value(&w, r));
        prop_assert!((back - r).abs() <= 1e-10 * (1.0 + r));
    }

    #[test]
    fn projection_is_feasible_stationary_and_scale_free(n in 1usize..12, seed: u64, c in 0.01f64..100.0) {
        let mut r = common::rng(seed);
        let a = Mat::from_row_major(n, n, (0..n * n).map(|_| r.random_range(-1.0..1.0)).collect());
        let q = a.matmul(&a.transpose()).add(&Mat::identity(n).scale(0.1)).symmetrize();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let x = project_nonneg_q(&GramMatrix::from_matrix(q.clone()).unwrap(), &y).unwrap();
        prop_assert!(x.as_slice().iter().all(|&v| v >= 0.0));
        let diff: Vec<f64> = x.as_slice().iter().zip(&y).map(|(a, b)| a - b).collect();
        let g = q.matvec(&diff);
        for (xi, gi) in x.as_slice().iter().zip(&g) {
            prop_assert!(*gi >= -1e-8);
            prop_assert!((xi * gi).abs() <= 1e-8);
        }
        let xc = project_nonneg_q(&GramMatrix::from_matrix(q.scale(c)).unwrap(), &y).unwrap();
        for (u, v) in x.as_slice().iter().zip(xc.as_slice()) {
            prop_assert!((u - v).abs() <= 1e-9);
        }
    }

    #[test]
    fn gram_solve_round_trips(d in 2usize..80, seed: u64) {
        let dict = Dictionary::<f64>::with_defaults(d, 0.01).unwrap();
        let g = GramMatrix::new(&dict).unwrap();
        let mut r = common::rng(seed);
        let v: Vec<f64> = (0..dict.len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let back = g.matvec(&g.solve(&v));
        let scale = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for (a, b) in back.iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn upper_gamma_decreases(s in 0.1f64..60.0, x in 0.0f64..100.0, dx in 1e-3f64..10.0) {
        let a = upper_incomplete_gamma(s, x).unwrap();
        let b = upper_incomplete_gamma(s, x + dx).unwrap();
        prop_assert!(b <= a);
        let log_f = |t: f64| (s - 1.0) * t.ln() - t;
        let log_step = log_f(x).min(log_f(x + dx)) + dx.ln() - a.ln();
        if a > 0.0 && log_step > -20.0 {
            prop_assert!(b < a);
        }
    }

    #[test]
    fn chi_squared_cdf_is_a_cdf(d in 1usize..200, x in 0.0f64..400.0, dx in 1e-3f64..5.0) {
        let a = chi_squared_cdf(d, x).unwrap();
        let b = chi_squared_cdf(d, x + dx).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && b >= a);
    }

    #[test]
    fn isotropic_potentials_ignore_rotations(d in 2usize..12, seed: u64, family in 0usize..4) {
        let family = [Family::Gaussian, Family::StudentT, Family::Laplace, Family::Logistic][family];
        let spec = TargetSpec::isotropic(family, d).with_dof(3.0).with_scale(0.7);
        let model = build_target(&spec).unwrap();
        let mut r = common::rng(seed);
        let x = common::normal_vec(&mut r, d);
        let u = common::random_orthogonal(&mut r, d);
        let ux: Vec<f64> = (u * nalgebra::DVector::from_vec(x.clone())).iter().cloned().collect();
        let (a, b) = (model.potential(&x), model.potential(&ux));
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn w2_is_symmetric_with_identity_of_indiscernibles(n in 1usize..20, seed: u64) {
        let mut r = common::rng(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| common::normal_vec(&mut r, 2)).collect();
        let y: Vec<Vec<f64>> = (0..n).map(|_| common::normal_vec(&mut r, 2)).collect();
        let a = empirical_w2_squared(&x, &y).unwrap();
        let b = empirical_w2_squared(&y, &x).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        prop_assert!(a > 0.0);
        let mut shuffled = x.clone();
        shuffled.reverse();
        prop_assert_eq!(empirical_w2_squared(&x, &shuffled).unwrap(), 0.0);
    }

    #[test]
    fn snis_of_constant_is_one(log_w in prop::collection::vec(-50.0f64..50.0, 1..200), shift in -500.0f64..500.0) {
        let ones = vec![1.0; log_w.len()];
        let rep = snis_from_log_weights(&log_w, &ones).unwrap();
        prop_assert!((rep.snis.value - 1.0).abs() < 1e-12);
        let vals: Vec<f64> = (0..log_w.len()).map(|i| i as f64).collect();
        let a = snis_from_log_weights(&log_w, &vals).unwrap().snis.value;
        let moved: Vec<f64> = log_w.iter().map(|v| v + shift).collect();
        let b = snis_from_log_weights(&moved, &vals).unwrap().snis.value;
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn pchip_preserves_monotone_data(steps in prop::collection::vec((0.01f64..2.0, 0.0f64..3.0), 3..30), t in 0.0f64..1.0) {
        let mut x = vec![0.0];
        let mut y = vec![0.0];
        for (dx, dy) in &steps {
            x.push(x.last().unwrap() + dx);
            y.push(y.last().unwrap() + dy);
        }
        let p = Pchip::new(x.clone(), y.clone());
        let span = *x.last().unwrap();
        let (a, b) = (p.eval(t * span), p.eval((t * span + 1e-3).min(span)));
        prop_assert!(b >= a - 1e-12);
        for (xi, yi) in x.iter().zip(&y) {
            prop_assert!((p.eval(*xi) - yi).abs() <= 1e-12 * (1.0 + yi.abs()));
        }
    }
}
