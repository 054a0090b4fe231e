//! Special functions used by the Gram matrix, the oracle maps and the target
//! normalizers: incomplete gamma and beta, chi-squared and F laws, the
//! modified Bessel function of the second kind (in log space), and ζ at
//! integer arguments.
//!
//! All routines are pure and generic over [`Real`].

use crate::error::{domain, Error, Result};
use crate::quad::{integrate, QuadConfig};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecFunConfig {
    pub rel_tolerance: f64,
    pub max_iterations: usize,
}

impl SpecFunConfig {
    pub fn for_type<T: Real>() -> Self {
        SpecFunConfig {
            rel_tolerance: T::SPECFUN_TOL,
            max_iterations: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config(format!("invalid special-function config {self:?}")));
        }
        Ok(())
    }
}

impl Default for SpecFunConfig {
    fn default() -> Self {
        Self::for_type::<f64>()
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `log Γ(x)` for `x > 0` (Lanczos approximation with reflection below 1/2).
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = T::c(0.5);
    if x < half {
        // Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::c(std::f64::consts::PI);
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::c(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::c(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::c(LANCZOS_G) + half;
    T::c(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

pub fn gamma<T: Real>(x: T) -> T {
    ln_gamma(x).exp()
}

pub fn ln_beta<T: Real>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized lower and upper incomplete gamma `(P(s,x), Q(s,x))`.
pub fn regularized_gamma<T: Real>(s: T, x: T, cfg: &SpecFunConfig) -> Result<(T, T)> {
    if !(s > T::zero()) || !(x >= T::zero()) {
        return Err(domain("regularized_gamma", format!("s = {s}, x = {x}")));
    }
    if x == T::zero() {
        return Ok((T::zero(), T::one()));
    }
    if x.is_infinite() {
        return Ok((T::one(), T::zero()));
    }
    let tol = T::c(cfg.rel_tolerance);
    let log_front = s * x.ln() - x - ln_gamma(s);
    if x < s + T::one() {
        // series: P = e^{-x} x^s / Γ(s) Σ x^n / (s (s+1) ... (s+n))
        let mut term = T::one() / s;
        let mut sum = term;
        let mut a = s;
        for _ in 0..cfg.max_iterations {
            a = a + T::one();
            term = term * x / a;
            sum = sum + term;
            if term.abs() <= sum.abs() * tol {
                let p = (log_front.exp() * sum).min(T::one());
                return Ok((p, T::one() - p));
            }
        }
        Err(Error::NonConvergence {
            function: "upper_incomplete_gamma",
            iterations: cfg.max_iterations,
            detail: format!("series at s = {s}, x = {x}"),
        })
    } else {
        // modified Lentz on the Legendre continued fraction for Q
        let tiny = T::min_positive_value() / T::epsilon();
        let mut b = x + T::one() - s;
        let mut c = T::one() / tiny;
        let mut d = T::one() / b;
        let mut h = d;
        for i in 1..=cfg.max_iterations {
            let fi = T::from_usize_lossy(i);
            let an = -fi * (fi - s);
            b = b + T::c(2.0);
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = T::one() / d;
            let delta = d * c;
            h = h * delta;
            if (delta - T::one()).abs() <= tol {
                let q = (log_front.exp() * h).min(T::one());
                return Ok((T::one() - q, q));
            }
        }
        Err(Error::NonConvergence {
            function: "upper_incomplete_gamma",
            iterations: cfg.max_iterations,
            detail: format!("continued fraction at s = {s}, x = {x}"),
        })
    }
}

/// Upper incomplete gamma `Γ(s, x) = ∫_x^∞ t^{s-1} e^{-t} dt`.
pub fn upper_incomplete_gamma<T: Real>(s: T, x: T) -> Result<T> {
    upper_incomplete_gamma_with(s, x, &SpecFunConfig::for_type::<T>())
}

pub fn upper_incomplete_gamma_with<T: Real>(s: T, x: T, cfg: &SpecFunConfig) -> Result<T> {
    let (_, q) = regularized_gamma(s, x, cfg)?;
    Ok(q * gamma(s))
}

/// CDF of the chi-squared law with `d` degrees of freedom.
pub fn chi_squared_cdf<T: Real>(d: usize, x: T) -> Result<T> {
    check_dof("chi_squared_cdf", d)?;
    if x < T::zero() {
        return Err(domain("chi_squared_cdf", format!("x = {x} < 0")));
    }
    let half = T::c(0.5);
    Ok(regularized_gamma(T::from_usize_lossy(d) * half, x * half, &SpecFunConfig::for_type::<T>())?.0)
}

/// Survival function `1 - F_{χ²_d}(x)` without cancellation in the tail.
pub fn chi_squared_sf<T: Real>(d: usize, x: T) -> Result<T> {
    check_dof("chi_squared_sf", d)?;
    if x < T::zero() {
        return Err(domain("chi_squared_sf", format!("x = {x} < 0")));
    }
    let half = T::c(0.5);
    Ok(regularized_gamma(T::from_usize_lossy(d) * half, x * half, &SpecFunConfig::for_type::<T>())?.1)
}

/// Log-density of the chi law (the radial law of a standard normal in `R^d`).
pub fn chi_log_density<T: Real>(d: usize, r: T) -> T {
    if r <= T::zero() {
        return if d == 1 && r == T::zero() {
            T::c(0.5 * (2.0 / std::f64::consts::PI).ln())
        } else {
            T::neg_infinity()
        };
    }
    let df = T::from_usize_lossy(d);
    let half = T::c(0.5);
    (df - T::one()) * r.ln() - r * r * half - (df * half - T::one()) * T::c(2f64.ln()) - ln_gamma(df * half)
}

fn check_dof(function: &'static str, d: usize) -> Result<()> {
    if d == 0 {
        return Err(domain(function, "degrees of freedom must be positive"));
    }
    Ok(())
}

fn beta_cf<T: Real>(a: T, b: T, x: T, cfg: &SpecFunConfig) -> Result<T> {
    let tiny = T::min_positive_value() / T::epsilon();
    let tol = T::c(cfg.rel_tolerance);
    let one = T::one();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = one / d;
    let mut h = d;
    for m in 1..=cfg.max_iterations {
        let m = T::from_usize_lossy(m);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = one / d;
        let delta = d * c;
        h = h * delta;
        if (delta - one).abs() <= tol {
            return Ok(h);
        }
    }
    Err(Error::NonConvergence {
        function: "incomplete_beta",
        iterations: cfg.max_iterations,
        detail: format!("a = {a}, b = {b}, x = {x}"),
    })
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_reg<T: Real>(a: T, b: T, x: T) -> Result<T> {
    if !(a > T::zero() && b > T::zero()) || !(x >= T::zero() && x <= T::one()) {
        return Err(domain("beta_reg", format!("a = {a}, b = {b}, x = {x}")));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x == T::one() {
        return Ok(T::one());
    }
    let cfg = SpecFunConfig::for_type::<T>();
    let log_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + T::one()) / (a + b + T::c(2.0)) {
        Ok(log_front.exp() * beta_cf(a, b, x, &cfg)? / a)
    } else {
        Ok(T::one() - log_front.exp() * beta_cf(b, a, T::one() - x, &cfg)? / b)
    }
}

/// Solves `I_x(a, b) = p` for `x` by safeguarded Newton iteration.
pub fn beta_reg_inv<T: Real>(a: T, b: T, p: T) -> Result<T> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(domain("beta_reg_inv", format!("p = {p}")));
    }
    if p == T::zero() {
        return Ok(T::zero());
    }
    if p == T::one() {
        return Ok(T::one());
    }
    let lb = ln_beta(a, b);
    let (mut lo, mut hi) = (T::zero(), T::one());
    // start from the mean, clamped into the open bracket
    let mut x = (a / (a + b)).max(T::c(1e-3)).min(T::c(1.0 - 1e-3));
    let eps = T::epsilon();
    for _ in 0..300 {
        let f = beta_reg(a, b, x)? - p;
        if f == T::zero() {
            return Ok(x);
        }
        if f < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let log_pdf = (a - T::one()) * x.ln() + (b - T::one()) * (-x).ln_1p() - lb;
        let step = f / log_pdf.exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if lo == T::zero() && hi < T::c(1e-3) {
                // geometric bisection when the root sits very close to 0
                (hi * hi.max(T::min_positive_value()).sqrt()).max(hi * T::c(1e-3))
            } else {
                (lo + hi) * T::c(0.5)
            };
        }
        if (next - x).abs() <= T::c(4.0) * eps * x.abs() || hi - lo <= T::c(4.0) * eps * hi {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NonConvergence {
        function: "beta_reg_inv",
        iterations: 300,
        detail: format!("a = {a}, b = {b}, p = {p}"),
    })
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf<T: Real>(d1: T, d2: T, x: T) -> Result<T> {
    if x <= T::zero() {
        return Ok(T::zero());
    }
    let half = T::c(0.5);
    let dx = d1 * x;
    if dx > d2 {
        Ok(T::one() - beta_reg(d2 * half, d1 * half, d2 / (dx + d2))?)
    } else {
        beta_reg(d1 * half, d2 * half, dx / (dx + d2))
    }
}

/// Survival function of the F distribution.
pub fn f_sf<T: Real>(d1: T, d2: T, x: T) -> Result<T> {
    if x <= T::zero() {
        return Ok(T::one());
    }
    let half = T::c(0.5);
    let dx = d1 * x;
    if dx > d2 {
        beta_reg(d2 * half, d1 * half, d2 / (dx + d2))
    } else {
        Ok(T::one() - beta_reg(d1 * half, d2 * half, dx / (dx + d2))?)
    }
}

/// Quantile `F⁻¹_{d1,d2}(p)` for `p ∈ [0, 1)`.
pub fn f_quantile<T: Real>(d1: T, d2: T, p: T) -> Result<T> {
    if !(p >= T::zero() && p < T::one()) {
        return Err(domain("f_quantile", format!("p = {p} outside [0, 1)")));
    }
    if !(d1 > T::zero() && d2 > T::zero()) {
        return Err(domain("f_quantile", format!("d1 = {d1}, d2 = {d2}")));
    }
    if p == T::zero() {
        return Ok(T::zero());
    }
    if p > T::c(0.5) {
        return f_quantile_upper(d1, d2, T::one() - p);
    }
    let half = T::c(0.5);
    let x = beta_reg_inv(d1 * half, d2 * half, p)?;
    Ok(d2 * x / (d1 * (T::one() - x)))
}

/// Upper-tail quantile: the `x` with `1 - F_{d1,d2}(x) = q`, accurate for small `q`.
pub fn f_quantile_upper<T: Real>(d1: T, d2: T, q: T) -> Result<T> {
    if !(q > T::zero() && q <= T::one()) {
        return Err(domain("f_quantile_upper", format!("q = {q} outside (0, 1]")));
    }
    if q == T::one() {
        return Ok(T::zero());
    }
    let half = T::c(0.5);
    // 1 - I_x(d1/2, d2/2) = I_{1-x}(d2/2, d1/2)
    let y = beta_reg_inv(d2 * half, d1 * half, q)?;
    Ok(d2 * (T::one() - y) / (d1 * y))
}

/// `log K_ν(x)` for `x > 0`.
///
/// Evaluates `K_ν(x) = ∫₀^∞ exp(-x cosh t) cosh(νt) dt` with the integrand
/// rescaled by its peak so that large orders and small arguments stay in range.
pub fn log_bessel_k<T: Real>(nu: T, x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() || !nu.is_finite() {
        return Err(domain("log_bessel_k", format!("nu = {nu}, x = {x}")));
    }
    let mu = nu.abs();
    let half = T::c(0.5);
    let log_integrand = |t: T| -> T {
        // log(cosh(μt)) = μt + log((1 + e^{-2μt}) / 2)
        -x * t.cosh() + mu * t + ((-T::c(2.0) * mu * t).exp() * half + half).ln()
    };
    let t_peak = if mu > T::zero() { (mu / x).asinh() } else { T::zero() };
    let peak = log_integrand(t_peak);
    let drop = T::c(-(T::epsilon().ln().as_f64()) + 25.0);
    let mut t_hi = t_peak + T::one();
    let mut width = T::one();
    while log_integrand(t_hi) - peak > -drop {
        width = width * T::c(2.0);
        t_hi = t_peak + width;
    }
    let cfg = QuadConfig::with_tol(T::QUAD_TOL * 1e-3, T::QUAD_TOL);
    let f = |t: T| (log_integrand(t) - peak).exp();
    let left = if t_peak > T::zero() {
        integrate(f, T::zero(), t_peak, cfg)?.value
    } else {
        T::zero()
    };
    let right = integrate(f, t_peak, t_hi, cfg)?.value;
    Ok(peak + (left + right).ln())
}

/// Riemann ζ at an integer `k ≥ 2`.
pub fn zeta_int<T: Real>(k: i32) -> Result<T> {
    if k < 2 {
        return Err(domain("zeta_int", format!("k = {k} < 2")));
    }
    // partial sum plus Euler–Maclaurin tail at N
    const N: i32 = 32;
    let s = T::c(k as f64);
    let mut sum = T::zero();
    for n in (1..N).rev() {
        sum = sum + T::c(n as f64).powi(-k);
    }
    let n = T::c(N as f64);
    let mut tail = n.powf(T::one() - s) / (s - T::one()) + n.powi(-k) * T::c(0.5);
    // Bernoulli corrections B_{2m}/(2m)! · s(s+1)...(s+2m-2) N^{-s-2m+1}
    let bern = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let mut rising = s;
    let mut fact = 2.0;
    for (m, &b) in bern.iter().enumerate() {
        let m = m as i32 + 1;
        tail = tail + T::c(b / fact) * rising * n.powi(-k - 2 * m + 1);
        rising = rising * (s + T::c((2 * m - 1) as f64)) * (s + T::c((2 * m) as f64));
        fact *= ((2 * m + 1) * (2 * m + 2)) as f64;
    }
    Ok(sum + tail)
}
