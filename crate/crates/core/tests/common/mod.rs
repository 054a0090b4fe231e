//! Reference computations shared by the integration tests. Nothing here calls
//! into the numerical routines under test.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Simpson with Richardson extrapolation between `n` and `2n` panels.
pub fn simpson_refined(f: impl Fn(f64) -> f64 + Copy, a: f64, b: f64, n: usize) -> f64 {
    let coarse = simpson(f, a, b, n);
    let fine = simpson(f, a, b, 2 * n);
    fine + (fine - coarse) / 15.0
}

/// Root of an increasing function by bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Gradient of `f` at `x` by central differences.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn normal_vec(rng: &mut (impl Rng + ?Sized), d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Random orthogonal matrix as a product of `d` Householder reflections.
pub fn random_orthogonal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let mut q = DMatrix::<f64>::identity(d, d);
    for _ in 0..d {
        let v = nalgebra::DVector::from_vec(normal_vec(rng, d));
        let v = &v / v.norm();
        let h = DMatrix::<f64>::identity(d, d) - 2.0 * &v * v.transpose();
        q = h * q;
    }
    q
}

pub fn to_dmatrix(m: &radvi_core::linalg::Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Chi density written out directly.
pub fn chi_pdf(d: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return if d == 1 && r == 0.0 { (2.0 / std::f64::consts::PI).sqrt() } else { 0.0 };
    }
    let k = d as f64;
    let log_norm = (k / 2.0 - 1.0) * std::f64::consts::LN_2 + ln_gamma_ref(k / 2.0);
    ((k - 1.0) * r.ln() - r * r / 2.0 - log_norm).exp()
}

/// `ln Γ(x)` by Stirling's series after shifting the argument above 15.
pub fn ln_gamma_ref(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 15.0 {
        acc -= x.ln();
        x += 1.0;
    }
    let x2 = x * x;
    acc + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x * x2)
        + 1.0 / (1260.0 * x2 * x2 * x)
        - 1.0 / (1680.0 * x2 * x2 * x2 * x)
}

/// Chi radius quantile by bisection on a Simpson-integrated CDF.
pub fn chi_quantile(d: usize, p: f64) -> f64 {
    let hi = (d as f64).sqrt() + 12.0;
    bisect(|r| simpson(|t| chi_pdf(d, t), 0.0, r, 4000) - p, 0.0, hi)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
