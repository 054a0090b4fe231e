//! Fast invariant suite run by `radvi validate`.

use radvi_core::basis::{Dictionary, Weights};
use radvi_core::gram::{gram_mc_validate, truncated_moment, GramMatrix};
use radvi_core::linalg::Mat;
use radvi_core::optimizer::{
    gaussian_batch, logdet_grad_semianalytic, logdet_objective, potential_grad_on, potential_objective_on,
    random_weights,
};
use radvi_core::oracles::{oracle_for_spec, RadialGrid};
use radvi_core::projection::project_nonneg_q;
use radvi_core::quad::{integrate, QuadConfig};
use radvi_core::rng::{stage_rng, StageRng};
use radvi_core::specfun::{chi_log_density, chi_squared_cdf};
use radvi_core::targets::{build_target, Family, TargetSpec};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution};

use crate::error::CliResult;

#[derive(Debug, Clone, Default)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Perturb one diagonal entry of `Q` before the isometry check.
    pub corrupt_gram: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateReport {
    pub checks: Vec<Check>,
}

impl ValidateReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            s.push_str(&format!("{tag} {:<20} {}\n", c.name, c.detail));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        s.push_str(&format!("{} checks, {failed} failed\n", self.checks.len()));
        s
    }
}

fn check(name: &'static str, worst: f64, tol: f64, what: &str) -> Check {
    Check {
        name,
        passed: worst <= tol,
        detail: format!("{what} {worst:.3e} (tol {tol:.0e})"),
    }
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> Check {
    Check {
        name,
        passed: false,
        detail: format!("error: {e}"),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn gram_mc_check(rng: &mut StageRng) -> Check {
    let mut run = || -> radvi_core::Result<f64> {
        let dict = Dictionary::with_defaults(10, 0.01)?;
        let gram = GramMatrix::new(&dict)?;
        gram_mc_validate(&dict, &gram, 200_000, rng)
    };
    match run() {
        Ok(dev) => check("gram_mc", dev, 1e-2, "max |Q - Q_mc| ="),
        Err(e) => failed("gram_mc", e),
    }
}

fn isometry_check(rng: &mut StageRng, corrupt: bool) -> Check {
    let mut run = || -> radvi_core::Result<f64> {
        let d = 10;
        let dict = Dictionary::with_defaults(d, 0.01)?;
        let mut q = GramMatrix::new(&dict)?.matrix().clone();
        if corrupt {
            q[(0, 0)] = q[(0, 0)] * 2.0;
        }
        let gram = GramMatrix::from_matrix(q)?;
        let chi2 = ChiSquared::new(d as f64).expect("positive dof");
        let radii: Vec<f64> = (0..200_000).map(|_| chi2.sample(&mut *rng).sqrt()).collect();
        let mut worst = 0.0f64;
        for _ in 0..5 {
            let a: Weights<f64> = random_weights(dict.len(), 1.0, rng);
            let b: Weights<f64> = random_weights(dict.len(), 1.0, rng);
            let diff: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
            let mc = radii
                .iter()
                .map(|&r| (dict.radial_value(&a, r) - dict.radial_value(&b, r)).powi(2))
                .sum::<f64>()
                / radii.len() as f64;
            worst = worst.max(rel(mc, gram.quad_form(&diff)));
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => check("isometry", w, 2e-2, "max relative gap ="),
        Err(e) => failed("isometry", e),
    }
}

fn logdet_fd_check(rng: &mut StageRng) -> Check {
    let mut run = || -> radvi_core::Result<f64> {
        let mut worst = 0.0f64;
        for d in [2usize, 10] {
            let dict = Dictionary::with_defaults(d, 0.01)?;
            for _ in 0..3 {
                let w: Weights<f64> = random_weights(dict.len(), 1.0, rng);
                let g = logdet_grad_semianalytic(&dict, &w)?;
                for j in 0..dict.len() {
                    let h = 1e-5 * w.as_slice()[j].max(0.1);
                    let mut p = w.as_slice().to_vec();
                    let mut m = p.clone();
                    p[j] += h;
                    m[j] -= h;
                    let fd = (logdet_objective(&dict, &Weights::new(p)?)?
                        - logdet_objective(&dict, &Weights::new(m)?)?)
                        / (2.0 * h);
                    let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
                    worst = worst.max((fd - g[j]).abs() / scale);
                }
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => check("logdet_fd", w, 1e-6, "max relative gap ="),
        Err(e) => failed("logdet_fd", e),
    }
}

fn potential_fd_check(rng: &mut StageRng) -> Check {
    let mut run = || -> radvi_core::Result<f64> {
        let d = 5;
        let dict = Dictionary::with_defaults(d, 0.01)?;
        let target = build_target(&TargetSpec::isotropic(Family::StudentT, d).with_dof(10.0))?;
        let mut worst = 0.0f64;
        for _ in 0..3 {
            let batch: Vec<Vec<f64>> = gaussian_batch(d, 200, rng);
            let w: Weights<f64> = random_weights(dict.len(), 1.0, rng);
            let g = potential_grad_on(target.as_ref(), &dict, &w, &batch);
            let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for j in 0..dict.len() {
                let h = 1e-5 * w.as_slice()[j].max(0.1);
                let mut p = w.as_slice().to_vec();
                let mut m = p.clone();
                p[j] += h;
                m[j] -= h;
                let fd = (potential_objective_on(target.as_ref(), &dict, &Weights::new(p)?, &batch)
                    - potential_objective_on(target.as_ref(), &dict, &Weights::new(m)?, &batch))
                    / (2.0 * h);
                worst = worst.max((fd - g[j]).abs() / scale);
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => check("potential_fd", w, 1e-5, "max relative gap ="),
        Err(e) => failed("potential_fd", e),
    }
}

fn kkt_check(rng: &mut StageRng) -> Check {
    let mut run = || -> radvi_core::Result<f64> {
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let n = rng.random_range(2..=12);
            let a: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let a = Mat::from_row_major(n, n, a);
            let q = a.matmul(&a.transpose()).add(&Mat::identity(n).scale(0.1)).symmetrize();
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let gram = GramMatrix::from_matrix(q.clone())?;
            let lam = project_nonneg_q(&gram, &y)?;
            let l = lam.as_slice();
            let resid: Vec<f64> = l.iter().zip(&y).map(|(a, b)| a - b).collect();
            let qr = q.matvec(&resid);
            let scale = 1.0 + q.frobenius() * y.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let neg = l.iter().fold(0.0f64, |m, &v| m.max(-v));
            let dual = qr.iter().fold(0.0f64, |m, &v| m.max(-v));
            let comp = l.iter().zip(&qr).map(|(a, b)| a * b).sum::<f64>().abs();
            worst = worst.max(neg).max(dual / scale).max(comp / scale);
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => check("projection_kkt", w, 1e-8, "worst KKT violation ="),
        Err(e) => failed("projection_kkt", e),
    }
}

fn oracle_check() -> Check {
    let run = || -> radvi_core::Result<f64> {
        let mut worst = 0.0f64;
        for family in [Family::Laplace, Family::Logistic] {
            let d = 5;
            let mut spec = TargetSpec::isotropic(family, d);
            if family == Family::Logistic {
                spec = spec.with_scale(1.0);
            }
            let oracle = oracle_for_spec(&spec, RadialGrid::default())?;
            for r in [0.5, 1.0, 2.0, 3.0, 4.5] {
                let s = oracle.eval(r);
                let back = oracle.target_cdf(s).unwrap_or(f64::NAN);
                worst = worst.max((back - chi_squared_cdf(d, r * r)?).abs());
                worst = worst.max(rel(s, oracle.eval_by_root_finding(r)?));
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => check("oracle_round_trip", w, 1e-6, "max CDF / root-finding gap ="),
        Err(e) => failed("oracle_round_trip", e),
    }
}

fn moment_check(rng: &mut StageRng) -> Check {
    let mut run = || -> radvi_core::Result<f64> {
        let mut worst = 0.0f64;
        for _ in 0..40 {
            let d = rng.random_range(1..=60usize);
            let k = rng.random_range(0..=2u32);
            let a = rng.random::<f64>() * 2.0 * (d as f64).sqrt();
            let b = a + rng.random::<f64>() * 3.0;
            let exact: f64 = truncated_moment(d, k, a, b)?;
            let quad = integrate(
                |r: f64| if r > 0.0 { r.powi(k as i32) * chi_log_density(d, r).exp() } else { 0.0 },
                a,
                b,
                QuadConfig::with_tol(1e-300, 1e-13),
            )?
            .value;
            if quad > 1e-280 {
                worst = worst.max(rel(exact, quad));
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => check("truncated_moments", w, 1e-10, "max relative gap ="),
        Err(e) => failed("truncated_moments", e),
    }
}

/// Runs every check; the report depends only on the seed and options.
pub fn validate(opts: &ValidateOptions) -> CliResult<ValidateReport> {
    let mut rng = stage_rng(opts.seed, 0);
    let checks = vec![
        gram_mc_check(&mut rng),
        isometry_check(&mut rng, opts.corrupt_gram),
        logdet_fd_check(&mut rng),
        potential_fd_check(&mut rng),
        kkt_check(&mut rng),
        oracle_check(),
        moment_check(&mut rng),
    ];
    Ok(ValidateReport { checks })
}
