mod common;

use common::{fd_grad, ln_gamma_ref, norm, normal_vec, random_orthogonal, rng, simpson_refined};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use radvi_core::linalg::Mat;
use radvi_core::targets::{build_target, make_anisotropic, sample_target, Family, TargetModel, TargetSpec};

fn spec(family: Family, d: usize) -> TargetSpec<f64> {
    let s = TargetSpec::isotropic(family, d);
    match family {
        Family::StudentT => s.with_dof(5.0),
        Family::Logistic => s.with_scale(1.0),
        _ => s,
    }
}

const ELLIPTICAL: [Family; 4] = [Family::Gaussian, Family::StudentT, Family::Laplace, Family::Logistic];

fn all_models(d: usize) -> Vec<TargetModel<f64>> {
    let mut out = Vec::new();
    let mut r = rng(11);
    for f in ELLIPTICAL {
        out.push(build_target(&spec(f, d)).unwrap());
        let aniso = make_anisotropic(&spec(f, d), &mut r).unwrap();
        let mean: Vec<f64> = (0..d).map(|i| 0.3 * i as f64 - 0.5).collect();
        out.push(build_target(&aniso.with_mean(mean)).unwrap());
    }
    out.push(build_target(&TargetSpec::<f64>::isotropic(Family::Funnel, d - 1)).unwrap());
    out
}

fn random_point(r: &mut impl Rng, model: &TargetModel<f64>) -> Vec<f64> {
    loop {
        let x: Vec<f64> = normal_vec(r, model.dim()).into_iter().map(|v| 1.5 * v).collect();
        // keep away from the origin, where the Laplace profile is singular
        if norm(&x) > 0.2 {
            return x;
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng(1);
    for model in all_models(5) {
        for _ in 0..100 {
            let x = random_point(&mut r, &model);
            let g = model.gradient(&x);
            let fd = fd_grad(|y| model.potential(y), &x, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "{}: {a} vs {b}", model.name());
            }
        }
    }
}

#[test]
fn hessians_are_symmetric_and_match_gradient_differences() {
    let mut r = rng(2);
    for model in all_models(4) {
        for _ in 0..100 {
            let x = random_point(&mut r, &model);
            let h = model.hessian(&x).unwrap();
            let n = x.len();
            for i in 0..n {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += 1e-5;
                xm[i] -= 1e-5;
                let (gp, gm) = (model.gradient(&xp), model.gradient(&xm));
                for j in 0..n {
                    assert!((h[(i, j)] - h[(j, i)]).abs() <= 1e-12 * (1.0 + h[(i, j)].abs()));
                    let fd = (gp[j] - gm[j]) / 2e-5;
                    assert!(
                        (h[(i, j)] - fd).abs() <= 1e-4 * (1.0 + fd.abs()),
                        "{} H[{i},{j}] = {} vs {fd}",
                        model.name(),
                        h[(i, j)]
                    );
                }
            }
        }
    }
}

#[test]
fn isotropic_potentials_are_rotation_invariant() {
    let mut r = rng(3);
    for f in ELLIPTICAL {
        let model = build_target(&spec(f, 6)).unwrap();
        assert!(model.is_isotropic());
        for _ in 0..20 {
            let u = random_orthogonal(&mut r, 6);
            let x = normal_vec(&mut r, 6);
            let ux: Vec<f64> = (u * DVector::from_vec(x.clone())).iter().cloned().collect();
            let (a, b) = (model.potential(&x), model.potential(&ux));
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            let v = model.radial_potential(norm(&x)).unwrap();
            assert!((a - v).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn radial_derivative_matches_finite_difference() {
    for f in ELLIPTICAL {
        let model = build_target(&spec(f, 7)).unwrap();
        for &r in &[0.05, 0.5, 1.0, 2.7, 6.0] {
            let fd = common::central_diff(|s| model.radial_potential(s).unwrap(), r, 1e-5);
            let d = model.radial_potential_deriv(r).unwrap();
            assert!((d - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{f:?} at {r}: {d} vs {fd}");
        }
    }
}

/// `ln ∫ exp(-V)` for an isotropic target, by Simpson in `s = ln r`.
fn radial_log_partition(model: &TargetModel<f64>, d: usize, s_max: f64) -> f64 {
    let ln_area = std::f64::consts::LN_2 + 0.5 * d as f64 * std::f64::consts::PI.ln() - ln_gamma_ref(0.5 * d as f64);
    let integral = simpson_refined(
        |s: f64| {
            let r = s.exp();
            (d as f64 * s - model.radial_potential(r).unwrap()).exp()
        },
        -30.0,
        s_max,
        4_000,
    );
    ln_area + integral.ln()
}

#[test]
fn normalizers_match_radial_quadrature() {
    for f in ELLIPTICAL {
        for d in 1..=6 {
            let model = build_target(&spec(f, d)).unwrap();
            let s_max = if f == Family::StudentT { 12.0 } else { 5.0 };
            let q = radial_log_partition(&model, d, s_max);
            let c = model.log_normalizer().unwrap();
            assert!((q - c).abs() < 1e-6, "{f:?}, d = {d}: quadrature {q}, closed form {c}");
        }
    }
}

#[test]
fn anisotropic_normalizer_matches_grid_quadrature() {
    let shape = Mat::from_row_major(2, 2, vec![2.0, 0.6, 0.6, 0.5]);
    for f in [Family::Gaussian, Family::Logistic] {
        let model = build_target(&spec(f, 2).with_shape(shape.clone()).with_mean(vec![0.4, -1.0])).unwrap();
        let inner = |x: f64| simpson_refined(|y: f64| (-model.potential(&[x, y])).exp(), -30.0, 30.0, 600);
        let z = simpson_refined(inner, -40.0, 40.0, 600);
        let c = model.log_normalizer().unwrap();
        assert!((z.ln() - c).abs() < 1e-6, "{f:?}: {} vs {c}", z.ln());
    }
    let funnel = build_target(&TargetSpec::<f64>::isotropic(Family::Funnel, 1)).unwrap();
    let inner = |z: f64| {
        let w = 12.0 * (0.5 * z).exp();
        simpson_refined(|x: f64| (-funnel.potential(&[z, x])).exp(), -w, w, 200)
    };
    let total = simpson_refined(inner, -25.0, 25.0, 2_000);
    assert!((total.ln() - funnel.log_normalizer().unwrap()).abs() < 1e-5);
}

#[test]
fn gaussian_sample_moments() {
    let model = build_target(&spec(Family::Gaussian, 5)).unwrap();
    let xs = sample_target(model.as_ref(), 100_000, &mut rng(4)).unwrap();
    let n = xs.len() as f64;
    for i in 0..5 {
        let m: f64 = xs.iter().map(|x| x[i]).sum::<f64>() / n;
        assert!(m.abs() < 0.02);
        for j in 0..5 {
            let c: f64 = xs.iter().map(|x| x[i] * x[j]).sum::<f64>() / n;
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((c - target).abs() < 0.03, "cov[{i},{j}] = {c}");
        }
    }
}

#[test]
fn anisotropic_gaussian_samples_have_shape_covariance() {
    let s = make_anisotropic(&spec(Family::Gaussian, 4), &mut rng(5)).unwrap();
    let sigma = s.shape.clone().unwrap();
    let model = build_target(&s.with_mean(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
    let xs = sample_target(model.as_ref(), 200_000, &mut rng(6)).unwrap();
    let n = xs.len() as f64;
    for i in 0..4 {
        for j in 0..4 {
            let c: f64 = xs.iter().map(|x| (x[i] - 1.0 - i as f64) * (x[j] - 1.0 - j as f64)).sum::<f64>() / n;
            let scale = (sigma[(i, i)] * sigma[(j, j)]).sqrt();
            assert!((c - sigma[(i, j)]).abs() < 0.02 * scale, "{c} vs {}", sigma[(i, j)]);
        }
    }
}

#[test]
fn funnel_neck_variance() {
    let model = build_target(&TargetSpec::<f64>::isotropic(Family::Funnel, 25)).unwrap();
    assert_eq!(model.dim(), 26);
    let xs = sample_target(model.as_ref(), 100_000, &mut rng(7)).unwrap();
    let ez2: f64 = xs.iter().map(|x| x[0] * x[0]).sum::<f64>() / xs.len() as f64;
    assert!((ez2 - 4.0).abs() < 0.15, "{ez2}");
}

#[test]
fn student_second_moment() {
    let model = build_target(&TargetSpec::isotropic(Family::StudentT, 5).with_dof(10.0)).unwrap();
    let xs = sample_target(model.as_ref(), 200_000, &mut rng(8)).unwrap();
    let m: f64 = xs.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / xs.len() as f64;
    assert!((m - 6.25).abs() < 0.02 * 6.25, "{m}");
}

/// One-sample KS of sampled radii against the CDF obtained by integrating
/// `r^{d-1} exp(-v(r))`.
fn radial_ks(model: &TargetModel<f64>, d: usize, radii: &mut [f64], s_max: f64) -> f64 {
    let m = 20_000;
    let h = (s_max + 20.0) / m as f64;
    let dens = |s: f64| (d as f64 * s - model.radial_potential(s.exp()).unwrap()).exp();
    let mut cum = vec![0.0; m + 1];
    for k in 0..m {
        let a = -20.0 + k as f64 * h;
        cum[k + 1] = cum[k] + h / 6.0 * (dens(a) + 4.0 * dens(a + 0.5 * h) + dens(a + h));
    }
    let total = cum[m];
    let cdf = |r: f64| {
        let pos = ((r.ln() + 20.0) / h).clamp(0.0, m as f64 - 1e-9);
        let k = pos as usize;
        let t = pos - k as f64;
        ((1.0 - t) * cum[k] + t * cum[k + 1]) / total
    };
    radii.sort_by(f64::total_cmp);
    let n = radii.len() as f64;
    radii
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let f = cdf(r);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn samplers_match_radial_laws() {
    let n = 20_000;
    // 1% critical value of the one-sample KS statistic
    let crit = 1.63 / (n as f64).sqrt();
    for (k, f) in ELLIPTICAL.into_iter().enumerate() {
        for d in [1usize, 4, 10] {
            let model = build_target(&spec(f, d)).unwrap();
            let mut radii: Vec<f64> = sample_target(model.as_ref(), n, &mut rng(100 + 10 * k as u64 + d as u64))
                .unwrap()
                .iter()
                .map(|x| norm(x))
                .collect();
            let s_max = if f == Family::StudentT { 12.0 } else { 5.0 };
            let ks = radial_ks(&model, d, &mut radii, s_max);
            assert!(ks < crit, "{f:?}, d = {d}: KS {ks}");
        }
    }
}

#[test]
fn anisotropic_shape_replays_from_seed() {
    let s = make_anisotropic(&spec(Family::Gaussian, 3), &mut rng(42)).unwrap();
    let mut r = rng(42);
    let a: Vec<f64> = (0..9).map(|_| r.sample(StandardNormal)).collect();
    let sigma = s.shape.unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let mut v: f64 = (0..3).map(|k| a[3 * i + k] * a[3 * j + k]).sum();
            if i == j {
                v += 1.0;
            }
            assert!((sigma[(i, j)] - v).abs() < 1e-12);
        }
    }
    let again = make_anisotropic(&spec(Family::Gaussian, 3), &mut rng(42)).unwrap();
    assert_eq!(again.shape.unwrap(), sigma);
}

#[test]
fn gaussian_conditioning_matches_eigenvalues() {
    let s = make_anisotropic(&spec(Family::Gaussian, 5), &mut rng(9)).unwrap();
    let sigma = common::to_dmatrix(s.shape.as_ref().unwrap());
    let ev = sigma.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    let c = build_target(&s).unwrap().conditioning().unwrap();
    assert!((c.strong_convexity - 1.0 / hi).abs() < 1e-10 / lo);
    assert!((c.smoothness - 1.0 / lo).abs() < 1e-10 / lo);
    assert!((c.condition_number() - hi / lo).abs() < 1e-8 * hi / lo);
}

#[test]
fn invalid_specs_are_rejected() {
    assert!("weibull".parse::<Family>().unwrap_err().to_string().contains("unknown target family"));
    assert!(build_target(&TargetSpec::<f64>::isotropic(Family::StudentT, 3)).is_err());
    assert!(build_target(&TargetSpec::<f64>::isotropic(Family::Logistic, 3)).is_err());
    assert!(build_target(&TargetSpec::<f64>::isotropic(Family::Gaussian, 0)).is_err());
    let not_pd = Mat::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
    assert!(build_target(&spec(Family::Gaussian, 2).with_shape(not_pd)).is_err());
    assert!(build_target(&spec(Family::Gaussian, 2).with_mean(vec![0.0; 3])).is_err());
}
