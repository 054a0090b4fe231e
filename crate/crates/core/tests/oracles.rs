mod common;

use common::{chi_pdf, normal_vec, norm, rng, simpson, simpson_refined};
use rand_distr::{ChiSquared, Distribution};
use radvi_core::error::Error;
use radvi_core::linalg::Mat;
use radvi_core::metrics::ks_two_sample;
use radvi_core::oracles::*;
use radvi_core::targets::{build_target, make_anisotropic, sample_target, Family, TargetSpec};

fn chi_cdf_ref(d: usize, r: f64) -> f64 {
    simpson_refined(|s| chi_pdf(d, s), 0.0, r, 4_000)
}

/// Radial CDF of an isotropic target with radial log-density `log φ`, by
/// Simpson in `t = ln r`.
fn radial_cdf_ref(log_phi: impl Fn(f64) -> f64 + Copy, s: f64, t_max: f64) -> f64 {
    let f = move |t: f64| (log_phi(t.exp()) + t).exp();
    simpson_refined(f, -30.0, s.ln(), 20_000) / simpson_refined(f, -30.0, t_max, 20_000)
}

fn sorted_quantile(v: &[f64], p: f64) -> f64 {
    v[((v.len() as f64 * p) as usize).min(v.len() - 1)]
}

#[test]
fn student_oracle_matches_brute_force_quantiles() {
    let (d, nu) = (5usize, 10.0);
    let oracle = student_t_radial_oracle(d, nu).unwrap();
    let n = 2_000_000;
    let mut r = rng(1);
    let chi2 = ChiSquared::new(d as f64).unwrap();
    let w = ChiSquared::new(nu).unwrap();
    let mut chi: Vec<f64> = (0..n).map(|_| chi2.sample(&mut r).sqrt()).collect();
    let mut t: Vec<f64> = (0..n).map(|_| (chi2.sample(&mut r) * nu / w.sample(&mut r)).sqrt()).collect();
    chi.sort_by(f64::total_cmp);
    t.sort_by(f64::total_cmp);
    for p in [0.05, 0.25, 0.5, 0.75, 0.95] {
        let mapped = oracle.eval(sorted_quantile(&chi, p));
        let direct = sorted_quantile(&t, p);
        assert!((mapped - direct).abs() < 0.01 * direct, "p = {p}: {mapped} vs {direct}");
    }
}

#[test]
fn student_oracle_matches_cdf_quadrature() {
    for (d, nu) in [(1usize, 3.0f64), (5, 10.0), (10, 10.0), (50, 4.0)] {
        let oracle = student_t_radial_oracle(d, nu).unwrap();
        let log_phi = move |s: f64| (d as f64 - 1.0) * s.ln() - 0.5 * (nu + d as f64) * (s * s / nu).ln_1p();
        for &r in &[0.3, 1.0, (d as f64).sqrt(), (d as f64).sqrt() + 2.5] {
            let s = oracle.eval(r);
            let lhs = radial_cdf_ref(log_phi, s, 30.0);
            let rhs = chi_cdf_ref(d, r);
            assert!((lhs - rhs).abs() < 1e-6, "d = {d}, r = {r}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn tabulated_oracles_satisfy_cdf_matching() {
    for family in [Family::Laplace, Family::Logistic] {
        for d in [2usize, 10] {
            let spec = TargetSpec::isotropic(family, d).with_scale(1.0);
            let model = build_target(&spec).unwrap();
            let oracle = oracle_for_spec(&spec, RadialGrid::default()).unwrap();
            let log_phi = |s: f64| model.radial_log_density(s).unwrap();
            for &r in &[0.5, 1.0, (d as f64).sqrt(), (d as f64).sqrt() + 2.0] {
                let s = oracle.eval(r);
                let lhs = radial_cdf_ref(log_phi, s, 5.0);
                let rhs = chi_cdf_ref(d, r);
                assert!((lhs - rhs).abs() < 1e-6, "{family:?}, d = {d}, r = {r}: {lhs} vs {rhs}");
                let exact = oracle.eval_by_root_finding(r).unwrap();
                assert!((exact - s).abs() < 1e-6 * s);
                assert!((oracle.target_cdf(s).unwrap() - rhs).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn tabulated_gaussian_recovers_linear_map() {
    let (d, sigma) = (7usize, 1.7f64);
    let oracle: RadialOracle<f64> = cdf_match_radial_oracle(
        move |s: f64| (d as f64 - 1.0) * s.ln() - s * s / (2.0 * sigma * sigma),
        d,
        RadialGrid::default(),
    )
    .unwrap();
    let linear = gaussian_radial_oracle(sigma).unwrap();
    for k in 1..60 {
        let r = 0.1 * k as f64;
        assert!((oracle.eval(r) - linear.eval(r)).abs() < 1e-6 * linear.eval(r), "r = {r}");
    }
}

#[test]
fn oracle_pushforward_matches_logistic_sampler() {
    let d = 10;
    let spec = TargetSpec::isotropic(Family::Logistic, d).with_scale(1.0);
    let model = build_target(&spec).unwrap();
    let oracle = oracle_for_spec(&spec, RadialGrid::default()).unwrap();
    let n = 20_000;
    let mut r = rng(2);
    let pushed: Vec<f64> = (0..n).map(|_| norm(&oracle.apply(&normal_vec(&mut r, d)))).collect();
    let direct: Vec<f64> = sample_target(model.as_ref(), n, &mut rng(3)).unwrap().iter().map(|x| norm(x)).collect();
    let ks = ks_two_sample(&pushed, &direct);
    // 1% critical value for two samples of equal size
    assert!(ks < 1.63 * (2.0 / n as f64).sqrt(), "{ks}");
}

#[test]
fn oracle_slopes_respect_curvature_bounds() {
    // logistic with s = 1 is 1/2-smooth, so the oracle expands distances by at least √2
    let spec = TargetSpec::isotropic(Family::Logistic, 5).with_scale(1.0);
    let oracle = oracle_for_spec(&spec, RadialGrid::default()).unwrap();
    for k in 1..80 {
        let r = 0.1 * k as f64;
        let slope = (oracle.eval(r + 1e-4) - oracle.eval(r - 1e-4)) / 2e-4;
        assert!(slope >= 2f64.sqrt() * (1.0 - 1e-4), "slope {slope} at {r}");
    }
    for sigma in [0.5f64, 1.0, 3.0] {
        let o = gaussian_radial_oracle(sigma).unwrap();
        let slope = (o.eval(2.0 + 1e-4) - o.eval(2.0 - 1e-4)) / 2e-4;
        assert!((slope - sigma).abs() < 1e-8);
    }
}

#[test]
fn oracles_are_monotone() {
    let spec = TargetSpec::<f64>::isotropic(Family::Laplace, 4);
    let lap = oracle_for_spec(&spec, RadialGrid::default()).unwrap();
    let st = student_t_radial_oracle(4, 3.0).unwrap();
    let mut prev = (0.0, 0.0);
    for k in 1..2_000 {
        let r = 0.005 * k as f64;
        let cur = (lap.eval(r), st.eval(r));
        assert!(cur.0 > prev.0 && cur.1 > prev.1, "r = {r}");
        prev = cur;
    }
}

#[test]
fn grid_coverage_is_enforced() {
    let spec = TargetSpec::isotropic(Family::Laplace, 10);
    let tight = RadialGrid {
        r_max: Some(3.0),
        n_points: 512,
    };
    assert!(matches!(oracle_for_spec(&spec, tight), Err(Error::Coverage { .. })));
    let auto = oracle_for_spec(&spec, RadialGrid::default()).unwrap();
    let (r_max, n) = auto.grid().unwrap();
    assert_eq!(n, 4096);
    let model = build_target(&spec).unwrap();
    let tail = 1.0 - radial_cdf_ref(|s| model.radial_log_density(s).unwrap(), r_max, 5.0);
    assert!(tail < 1e-10);
    assert!(oracle_for_spec(&TargetSpec::<f64>::isotropic(Family::Funnel, 3), RadialGrid::default()).is_err());
    let aniso = make_anisotropic(&TargetSpec::<f64>::isotropic(Family::Gaussian, 3), &mut rng(1)).unwrap();
    assert!(oracle_for_spec(&aniso, RadialGrid::default()).is_err());
    assert!(gaussian_radial_oracle(-1.0).is_err());
}

#[test]
fn oracle_csv_has_header_and_rows() {
    let o = gaussian_radial_oracle(2.0).unwrap();
    let mut buf = Vec::new();
    o.write_csv(&mut buf, &[0.0, 1.0, 2.5]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "r,psi");
    assert_eq!(lines.len(), 4);
    let last: Vec<f64> = lines[3].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last, vec![2.5, 5.0]);
}

#[test]
fn spherical_average_of_quadratic_form() {
    let d = 6;
    let spec = make_anisotropic(&TargetSpec::isotropic(Family::Gaussian, d), &mut rng(4)).unwrap();
    let model = build_target(&spec).unwrap();
    let sigma = common::to_dmatrix(spec.shape.as_ref().unwrap());
    let trace_precision = sigma.try_inverse().unwrap().trace();
    let avg = spherical_average_potential(model.as_ref(), 20_000, &mut rng(5)).unwrap();
    for &r in &[0.5, 1.0, 2.0, 4.0] {
        let exact = r * r * trace_precision / (2.0 * d as f64);
        let est = avg.eval(r);
        assert!((est - exact).abs() < 4.0 * avg.std_error(r), "r = {r}: {est} vs {exact}");
    }
    assert!(spherical_average_potential(model.as_ref(), 50, &mut rng(5)).is_err());
}

#[test]
fn spherical_average_of_isotropic_target_is_exact() {
    let model = build_target(&TargetSpec::isotropic(Family::Logistic, 4).with_scale(2.0)).unwrap();
    let avg = spherical_average_potential(model.as_ref(), 100, &mut rng(6)).unwrap();
    let mut r = rng(7);
    for _ in 0..20 {
        let x = normal_vec(&mut r, 4);
        assert_eq!(avg.eval(norm(&x)), model.potential(&x));
        assert_eq!(avg.std_error(norm(&x)), 0.0);
    }
    let s = 1.5f64;
    assert!((avg.radial_log_density(s) - (3.0 * s.ln() - model.radial_potential(s).unwrap())).abs() < 1e-14);
}

#[test]
fn spherical_average_agrees_with_direct_sphere_integral() {
    // d = 2: V̄(r) = (1/2π) ∫ V(r cos t, r sin t) dt
    let shape = Mat::from_row_major(2, 2, vec![2.0, 0.5, 0.5, 1.0]);
    let model = build_target(&TargetSpec::isotropic(Family::Laplace, 2).with_shape(shape)).unwrap();
    let avg = spherical_average_potential(model.as_ref(), 50_000, &mut rng(8)).unwrap();
    let r = 1.3;
    let exact = simpson(|t: f64| model.potential(&[r * t.cos(), r * t.sin()]), 0.0, std::f64::consts::TAU, 2_000)
        / std::f64::consts::TAU;
    assert!((avg.eval(r) - exact).abs() < 4.0 * avg.std_error(r));
}

#[test]
fn spherical_average_oracle_reduces_to_exact_oracle_for_isotropic_targets() {
    let spec = TargetSpec::<f64>::isotropic(Family::Laplace, 4);
    let exact = oracle_for_spec(&spec, RadialGrid::default()).unwrap();
    let model = build_target(&spec).unwrap();
    let avg = spherical_average_oracle(model, 100, &mut rng(9), RadialGrid::default()).unwrap();
    for &r in &[0.2, 1.0, 2.0, 3.5, 5.0] {
        let (a, b) = (avg.eval(r), exact.eval(r));
        assert!((a - b).abs() < 1e-6 * b.max(1.0), "r = {r}: {a} vs {b}");
    }
}

#[test]
fn spherical_average_oracle_of_anisotropic_gaussian_is_linear() {
    let d = 6;
    let spec = make_anisotropic(&TargetSpec::isotropic(Family::Gaussian, d), &mut rng(4)).unwrap();
    let sigma = common::to_dmatrix(spec.shape.as_ref().unwrap());
    let scale = (d as f64 / sigma.try_inverse().unwrap().trace()).sqrt();
    let model = build_target(&spec).unwrap();
    let oracle = spherical_average_oracle(model, 1_000, &mut rng(10), RadialGrid::default()).unwrap();
    for &r in &[0.5, 1.5, 2.4, 3.5] {
        let rel = (oracle.eval(r) / (scale * r) - 1.0).abs();
        assert!(rel < 0.03, "r = {r}: {} vs {}", oracle.eval(r), scale * r);
    }
}
