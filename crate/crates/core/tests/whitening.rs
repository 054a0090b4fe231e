mod common;

use common::{fd_grad, normal_vec, random_orthogonal, rng, simpson_refined};
use nalgebra::DMatrix;
use radvi_core::basis::{Dictionary, Weights};
use radvi_core::error::Error;
use radvi_core::linalg::Mat;
use radvi_core::optimizer::gaussian_batch;
use radvi_core::targets::{build_target, make_anisotropic, Family, Target, TargetModel, TargetSpec};
use radvi_core::whitening::*;

fn aniso_gaussian(d: usize, seed: u64) -> (TargetSpec<f64>, TargetModel<f64>) {
    let s = make_anisotropic(&TargetSpec::isotropic(Family::Gaussian, d), &mut rng(seed)).unwrap();
    let mean: Vec<f64> = (0..d).map(|i| 1.0 - 0.5 * i as f64).collect();
    let s = s.with_mean(mean);
    let t = build_target(&s).unwrap();
    (s, t)
}

fn from_dmatrix(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_row_major(m.nrows(), m.ncols(), m.transpose().as_slice().to_vec())
}

#[test]
fn laplace_recovers_gaussian_exactly() {
    let (s, t) = aniso_gaussian(5, 1);
    let w = laplace_approx(t.as_ref(), &[0.0; 5], 1e-10).unwrap();
    for (a, b) in w.mean().iter().zip(s.mean.as_ref().unwrap()) {
        assert!((a - b).abs() < 1e-8);
    }
    assert!(w.covariance().max_abs_diff(s.shape.as_ref().unwrap()) < 1e-8);
    assert!(w.factor().is_lower_triangular());
}

#[test]
fn laplace_on_funnel_finds_the_mode() {
    let d = 25;
    let t = build_target(&TargetSpec::<f64>::isotropic(Family::Funnel, d)).unwrap();
    let w = laplace_approx(t.as_ref(), &vec![0.0; d + 1], 1e-8).unwrap();
    assert!((w.mean()[0] + 2.0 * d as f64).abs() < 1e-6);
    assert!(w.mean()[1..].iter().all(|v| v.abs() < 1e-6));
    let g = t.gradient(w.mean());
    assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-8);
    // Σ = H⁻¹ at the mode
    let h = common::to_dmatrix(&t.hessian(w.mean()).unwrap());
    let sigma = common::to_dmatrix(&w.covariance());
    let prod = h * sigma;
    assert!((prod - DMatrix::identity(d + 1, d + 1)).amax() < 1e-8);
}

#[derive(Debug)]
struct Saddle;

impl Target<f64> for Saddle {
    fn dim(&self) -> usize {
        2
    }
    fn potential(&self, x: &[f64]) -> f64 {
        0.5 * x[0] * x[0] - 0.5 * x[1] * x[1]
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0], -x[1]]
    }
    fn hessian(&self, _: &[f64]) -> Option<Mat<f64>> {
        Some(Mat::from_diag(&[1.0, -1.0]))
    }
    fn name(&self) -> String {
        "saddle".into()
    }
}

#[test]
fn laplace_rejects_indefinite_hessian() {
    let err = laplace_approx(&Saddle, &[0.0, 0.0], 1e-8).unwrap_err();
    assert!(matches!(err, Error::NonInvertibleHessian { .. }), "{err:?}");
}

#[test]
fn gaussian_vi_recovers_gaussian() {
    let (s, t) = aniso_gaussian(5, 2);
    let out = gaussian_vi(t.as_ref(), &GviConfig::default()).unwrap();
    let w = &out.transform;
    let sigma = s.shape.as_ref().unwrap();
    let scale = sigma.frobenius();
    let mean_err: f64 = w
        .mean()
        .iter()
        .zip(s.mean.as_ref().unwrap())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let cov_err = w.covariance().max_abs_diff(sigma);
    assert!(mean_err < 0.1 * scale.sqrt(), "mean error {mean_err}");
    assert!(cov_err < 0.1 * scale, "covariance error {cov_err} vs {scale}");
    assert!(w.factor().is_lower_triangular());
    assert!(w.factor().diag().iter().all(|&v| v >= GVI_MIN_DIAGONAL));
}

#[test]
fn gaussian_vi_decreases_its_objective_and_replays() {
    let t = build_target(&TargetSpec::isotropic(Family::StudentT, 4).with_dof(5.0)).unwrap();
    let cfg = GviConfig {
        iterations: 2_000,
        init_scale: 0.2,
        seed: 3,
        ..Default::default()
    };
    let out = gaussian_vi(t.as_ref(), &cfg).unwrap();
    let batch = gaussian_batch(4, 100_000, &mut rng(9));
    let before = gvi_objective(t.as_ref(), &[0.0; 4], &Mat::identity(4).scale(0.2), &batch);
    let after = gvi_objective(t.as_ref(), out.transform.mean(), out.transform.factor(), &batch);
    assert!(after < before - 0.5, "{before} -> {after}");
    let again = gaussian_vi(t.as_ref(), &cfg).unwrap();
    assert_eq!(again.transform, out.transform);
    assert!(gaussian_vi(t.as_ref(), &GviConfig { batch_size: 0, ..cfg }).is_err());
}

#[test]
fn gaussian_vi_halves_steps_when_the_factor_would_collapse() {
    let t = build_target(&TargetSpec::<f64>::isotropic(Family::Gaussian, 2)).unwrap();
    let cfg = GviConfig {
        step_size: 5.0,
        iterations: 50,
        ..Default::default()
    };
    let out = gaussian_vi(t.as_ref(), &cfg).unwrap();
    assert!(out.step_halvings > 0);
    assert!(out.final_step_size < 5.0);
    assert!(out.transform.factor().diag().iter().all(|&v| v >= GVI_MIN_DIAGONAL));
}

#[test]
fn whitened_target_is_consistent() {
    let (_, t) = aniso_gaussian(4, 3);
    let w = WhiteningTransform::new(vec![0.5, -0.3, 1.0, 0.0], {
        let mut a = Mat::identity(4).scale(0.7);
        a[(2, 0)] = 0.4;
        a[(3, 1)] = -0.2;
        a
    })
    .unwrap();
    let wt = whiten_target(t.clone(), &w).unwrap();
    let mut r = rng(4);
    for _ in 0..50 {
        let x = normal_vec(&mut r, 4);
        assert!((wt.potential(&x) - t.potential(&w.apply(&x))).abs() < 1e-12);
        let fd = fd_grad(|y| wt.potential(y), &x, 1e-6);
        for (a, b) in wt.gradient(&x).iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()));
        }
        let back = w.invert(&w.apply(&x));
        assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
    }
    let id = whiten_target(t.clone(), &WhiteningTransform::identity(4)).unwrap();
    let x = normal_vec(&mut r, 4);
    assert_eq!(id.potential(&x), t.potential(&x));
    assert_eq!(id.log_normalizer(), t.log_normalizer());
    // ∫ e^{-V(Ax+m)} dx = |det A|⁻¹ ∫ e^{-V}
    let expect = t.log_normalizer().unwrap() - 0.7f64.powi(4).ln();
    assert!((wt.log_normalizer().unwrap() - expect).abs() < 1e-12);
    assert!(whiten_target(t, &WhiteningTransform::identity(3)).is_err());
}

#[test]
fn record_round_trip_and_singular_factor() {
    let (_, t) = aniso_gaussian(3, 5);
    let w = laplace_approx(t.as_ref(), &[0.0; 3], 1e-10).unwrap();
    let rec = w.to_record();
    let json = serde_json::to_string(&rec).unwrap();
    let back: WhiteningRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(WhiteningTransform::from_record(&back).unwrap(), w);
    assert!((rec.log_abs_det - w.factor().diag().iter().map(|v| v.ln()).sum::<f64>()).abs() < 1e-12);
    let singular = Mat::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
    assert!(WhiteningTransform::new(vec![0.0, 0.0], singular).is_err());
}

fn composite(d: usize, seed: u64) -> CompositeMap<f64> {
    let dict = Dictionary::with_defaults(d, 0.1).unwrap();
    let mut r = rng(seed);
    let weights = radvi_core::optimizer::random_weights(dict.len(), 1.5, &mut r);
    let mut a = Mat::identity(d).scale(1.3);
    if d > 1 {
        a[(1, 0)] = 0.6;
    }
    let w = WhiteningTransform::new(vec![0.4; d], a).unwrap();
    CompositeMap::new(w, dict, weights).unwrap()
}

#[test]
fn composite_density_integrates_to_one() {
    let map = composite(2, 6);
    let inner = |y0: f64| simpson_refined(|y1: f64| map.log_density(&[y0, y1]).exp(), -25.0, 25.0, 1_000);
    let total = simpson_refined(inner, -25.0, 25.0, 1_000);
    assert!((total - 1.0).abs() < 1e-4, "{total}");
}

#[test]
fn composite_preimage_inverts_push() {
    let map = composite(5, 7);
    let mut r = rng(8);
    for _ in 0..100 {
        let x = normal_vec(&mut r, 5);
        let y = map.push(&x);
        assert_eq!(y, composite_push(&map, &x));
        let back = map.preimage(&y);
        assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-9 * (1.0 + b.abs())));
    }
    let wrong = Weights::constant(3, 1.0).unwrap();
    assert!(CompositeMap::new(map.whitening.clone(), map.dict.clone(), wrong).is_err());
}

#[test]
fn composite_law_ignores_choice_of_square_root() {
    let d = 4;
    let map = composite(d, 9);
    let u = random_orthogonal(&mut rng(10), d);
    let au = common::to_dmatrix(map.whitening.factor()) * u;
    let rotated = CompositeMap::new(
        WhiteningTransform::new(map.whitening.mean().to_vec(), from_dmatrix(&au)).unwrap(),
        map.dict.clone(),
        map.weights.clone(),
    )
    .unwrap();
    let mut r = rng(11);
    for _ in 0..50 {
        let y: Vec<f64> = normal_vec(&mut r, d).into_iter().map(|v| 2.0 * v).collect();
        let (a, b) = (map.log_density(&y), rotated.log_density(&y));
        assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn composite_sampler_matches_its_density() {
    // E_q[f] by sampling vs by quadrature of f q, with f(y) = y₀²
    let map = composite(2, 12);
    let mut r = rng(13);
    let n = 200_000;
    let mc: f64 = (0..n).map(|_| map.sample(&mut r)[0].powi(2)).sum::<f64>() / n as f64;
    let inner = |y0: f64| simpson_refined(|y1: f64| y0 * y0 * map.log_density(&[y0, y1]).exp(), -25.0, 25.0, 1_000);
    let quad = simpson_refined(inner, -25.0, 25.0, 1_000);
    assert!((mc - quad).abs() < 0.02 * quad, "{mc} vs {quad}");
}

#[test]
fn composite_samples_ignore_choice_of_square_root() {
    let d = 3;
    let map = composite(d, 14);
    let u = random_orthogonal(&mut rng(15), d);
    let au = common::to_dmatrix(map.whitening.factor()) * u;
    let rotated = CompositeMap::new(
        WhiteningTransform::new(map.whitening.mean().to_vec(), from_dmatrix(&au)).unwrap(),
        map.dict.clone(),
        map.weights.clone(),
    )
    .unwrap();
    let n = 100_000;
    let mut r = rng(16);
    let a: Vec<Vec<f64>> = (0..n).map(|_| map.sample(&mut r)).collect();
    let b: Vec<Vec<f64>> = (0..n).map(|_| rotated.sample(&mut r)).collect();
    let moments = |xs: &[Vec<f64>]| {
        let mut m = vec![0.0; d];
        let mut c = vec![0.0; d * d];
        for x in xs {
            for i in 0..d {
                m[i] += x[i] / n as f64;
                for j in 0..d {
                    c[i * d + j] += x[i] * x[j] / n as f64;
                }
            }
        }
        (m, c)
    };
    let ((ma, ca), (mb, cb)) = (moments(&a), moments(&b));
    let scale = ca.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for i in 0..d {
        assert!((ma[i] - mb[i]).abs() < 0.03 * scale.sqrt());
    }
    for (x, y) in ca.iter().zip(&cb) {
        assert!((x - y).abs() < 0.05 * scale, "{x} vs {y}");
    }
    let centered = |xs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        xs.iter().map(|x| map.whitening.invert(x)).collect()
    };
    let prof_a = radvi_core::metrics::radial_quantile_profile(&centered(&a), &[0.1, 0.5, 0.9]).unwrap();
    let prof_b = radvi_core::metrics::radial_quantile_profile(&centered(&b), &[0.1, 0.5, 0.9]).unwrap();
    for ((_, x), (_, y)) in prof_a.iter().zip(&prof_b) {
        assert!((x - y).abs() < 0.02 * x, "{x} vs {y}");
    }
}
