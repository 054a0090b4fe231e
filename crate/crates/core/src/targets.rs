//! Target posteriors `π ∝ exp(-V)`: potentials, gradients, Hessians, exact
//! samplers and, for isotropic families, radial log-densities.
//!
//! Elliptical families are written in terms of the Mahalanobis radius
//! `r(x) = ‖L⁻¹(x - μ)‖` with `Σ = L Lᵀ` and a radial profile `v(r)`, so that
//! `V(x) = v(r(x))`. Potentials drop additive constants; the constant that
//! normalizes the density is available from [`Target::log_normalizer`].

use std::f64::consts::{LN_2, PI};
use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{ChiSquared, Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{solve_lower, solve_lower_transpose, symmetric_eigenvalues, Cholesky, Mat};
use crate::scalar::{norm, Real};
use crate::specfun::{ln_gamma, log_bessel_k, zeta_int};

/// Smallest Mahalanobis radius at which the Laplace potential is evaluated.
pub const LAPLACE_MIN_RADIUS: f64 = 1e-8;

/// Strong convexity and smoothness constants `(ℓ_V, L_V)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditioning<T> {
    pub strong_convexity: T,
    pub smoothness: T,
}

impl<T: Real> Conditioning<T> {
    pub fn condition_number(&self) -> T {
        self.smoothness / self.strong_convexity
    }
}

/// Query interface to an unnormalized posterior.
pub trait Target<T: Real>: Send + Sync + Debug {
    fn dim(&self) -> usize;

    /// `V(x)` up to an additive constant.
    fn potential(&self, x: &[T]) -> T;

    fn gradient(&self, x: &[T]) -> Vec<T>;

    fn hessian(&self, _x: &[T]) -> Option<Mat<T>> {
        None
    }

    /// `None` when the constants are unknown.
    fn conditioning(&self) -> Option<Conditioning<T>> {
        None
    }

    /// Constant `c` with `π(x) = exp(-V(x) - c)`.
    fn log_normalizer(&self) -> Option<T> {
        None
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> Result<Vec<T>> {
        Err(Error::Unsupported(format!("{self:?} has no exact sampler")))
    }

    fn has_sampler(&self) -> bool {
        false
    }

    /// `v(r)` with `V(x) = v(‖x‖)` when the target is isotropic about the origin.
    fn radial_potential(&self, _r: T) -> Option<T> {
        None
    }

    /// `v'(r)` for isotropic targets, read off the gradient along the first axis.
    fn radial_potential_deriv(&self, r: T) -> Option<T> {
        self.radial_potential(r)?;
        let mut x = vec![T::zero(); self.dim()];
        x[0] = r;
        Some(self.gradient(&x)[0])
    }

    /// Log-density of `‖Y‖`, `Y ~ π`, up to an additive constant (isotropic targets).
    fn radial_log_density(&self, r: T) -> Option<T> {
        let v = self.radial_potential(r)?;
        Some(T::from_usize_lossy(self.dim() - 1) * r.ln() - v)
    }

    fn is_isotropic(&self) -> bool {
        self.radial_potential(T::one()).is_some()
    }

    fn name(&self) -> String;
}

pub type TargetModel<T = f64> = Arc<dyn Target<T>>;

/// Draws `n` i.i.d. points from the target.
pub fn sample_target<T: Real>(
    model: &dyn Target<T>,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<Vec<T>>> {
    if !model.has_sampler() {
        return Err(Error::Unsupported(format!(
            "target {} has no exact sampler",
            model.name()
        )));
    }
    (0..n).map(|_| model.sample(rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    StudentT,
    Laplace,
    Logistic,
    Funnel,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::StudentT => "student_t",
            Family::Laplace => "laplace",
            Family::Logistic => "logistic",
            Family::Funnel => "funnel",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "student_t" | "student" | "t" => Ok(Family::StudentT),
            "laplace" => Ok(Family::Laplace),
            "logistic" => Ok(Family::Logistic),
            "funnel" => Ok(Family::Funnel),
            other => Err(Error::Config(format!("unknown target family '{other}'"))),
        }
    }
}

/// Declarative description of a target.
///
/// `dimension` is the ambient dimension for elliptical families and the
/// number of `x` coordinates for the funnel (whose ambient dimension is `d + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec<T: Real = f64> {
    pub family: Family,
    pub dimension: usize,
    pub dof: Option<T>,
    pub scale: Option<T>,
    pub mean: Option<Vec<T>>,
    /// `Σ`; identity when absent.
    pub shape: Option<Mat<T>>,
}

impl<T: Real> TargetSpec<T> {
    pub fn isotropic(family: Family, dimension: usize) -> Self {
        TargetSpec {
            family,
            dimension,
            dof: None,
            scale: None,
            mean: None,
            shape: None,
        }
    }

    pub fn with_dof(mut self, dof: T) -> Self {
        self.dof = Some(dof);
        self
    }

    pub fn with_scale(mut self, scale: T) -> Self {
        self.scale = Some(scale);
        self
    }

    pub fn with_mean(mut self, mean: Vec<T>) -> Self {
        self.mean = Some(mean);
        self
    }

    pub fn with_shape(mut self, shape: Mat<T>) -> Self {
        self.shape = Some(shape);
        self
    }

    pub fn is_isotropic(&self) -> bool {
        self.shape.is_none() && self.mean.as_ref().is_none_or(|m| m.iter().all(|v| *v == T::zero()))
    }

    /// Ambient dimension of the model built from this spec.
    pub fn ambient_dim(&self) -> usize {
        match self.family {
            Family::Funnel => self.dimension + 1,
            _ => self.dimension,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if let Some(nu) = self.dof {
            if !(nu > T::zero()) {
                return Err(Error::Config(format!("degrees of freedom {nu} must be positive")));
            }
        }
        if let Some(s) = self.scale {
            if !(s > T::zero()) {
                return Err(Error::Config(format!("logistic scale {s} must be positive")));
            }
        }
        match self.family {
            Family::StudentT if self.dof.is_none() => {
                return Err(Error::Config("student_t target requires 'dof'".into()))
            }
            Family::Logistic if self.scale.is_none() => {
                return Err(Error::Config("logistic target requires 'scale'".into()))
            }
            Family::Funnel if self.shape.is_some() || self.mean.is_some() => {
                return Err(Error::Config("funnel target takes no mean or shape".into()))
            }
            _ => {}
        }
        let d = self.ambient_dim();
        if let Some(m) = &self.mean {
            if m.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: m.len(),
                });
            }
        }
        if let Some(s) = &self.shape {
            if s.nrows() != d || s.ncols() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: s.nrows(),
                });
            }
            if s.max_abs_diff(&s.transpose()) > T::epsilon() * T::c(64.0) * s.frobenius() {
                return Err(Error::Config("shape matrix is not symmetric".into()));
            }
            Cholesky::new(s)
                .map_err(|_| Error::Config("shape matrix is not positive definite".into()))?;
        }
        Ok(())
    }
}

/// Replaces the shape of an isotropic spec by `Σ = A Aᵀ + I` with `A_ij ~ N(0, 1)`
/// drawn row by row from `rng`.
pub fn make_anisotropic<T: Real, R: Rng + ?Sized>(base: &TargetSpec<T>, rng: &mut R) -> Result<TargetSpec<T>> {
    if !base.is_isotropic() {
        return Err(Error::Config("make_anisotropic expects an isotropic base spec".into()));
    }
    let d = base.ambient_dim();
    let a: Vec<T> = (0..d * d)
        .map(|_| T::c(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let a = Mat::from_row_major(d, d, a);
    let sigma = a.matmul(&a.transpose()).add(&Mat::identity(d)).symmetrize();
    Ok(base.clone().with_shape(sigma))
}

pub fn build_target<T: Real>(spec: &TargetSpec<T>) -> Result<TargetModel<T>> {
    spec.validate()?;
    let profile = match spec.family {
        Family::Funnel => return Ok(Arc::new(Funnel::new(spec.dimension))),
        Family::Gaussian => Profile::Gaussian,
        Family::StudentT => Profile::StudentT { dof: spec.dof.unwrap() },
        Family::Laplace => Profile::Laplace,
        Family::Logistic => Profile::Logistic {
            scale: spec.scale.unwrap(),
        },
    };
    Ok(Arc::new(Elliptical::new(
        profile,
        spec.dimension,
        spec.mean.clone(),
        spec.shape.clone(),
    )?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Profile<T> {
    Gaussian,
    StudentT { dof: T },
    Laplace,
    Logistic { scale: T },
}

/// Elliptical target `V(x) = v(r(x))`.
#[derive(Debug, Clone)]
pub struct Elliptical<T: Real> {
    profile: Profile<T>,
    dim: usize,
    mean: Option<Vec<T>>,
    /// lower Cholesky factor of `Σ`, `None` for the identity
    factor: Option<Mat<T>>,
    precision: Option<Mat<T>>,
    log_det_shape: T,
    conditioning: Option<Conditioning<T>>,
}

impl<T: Real> Elliptical<T> {
    fn new(profile: Profile<T>, dim: usize, mean: Option<Vec<T>>, shape: Option<Mat<T>>) -> Result<Self> {
        let (factor, precision, log_det_shape, eig) = match shape {
            None => (None, None, T::zero(), None),
            Some(s) => {
                let ch = Cholesky::new(&s)
                    .map_err(|_| Error::Config("shape matrix is not positive definite".into()))?;
                let ev = symmetric_eigenvalues(&s);
                let ld = ch.log_det();
                let prec = ch.inverse();
                (Some(ch.into_factor()), Some(prec), ld, Some(ev))
            }
        };
        let conditioning = match profile {
            Profile::Gaussian => Some(match eig {
                None => Conditioning {
                    strong_convexity: T::one(),
                    smoothness: T::one(),
                },
                Some(ev) => Conditioning {
                    strong_convexity: T::one() / *ev.last().unwrap(),
                    smoothness: T::one() / ev[0],
                },
            }),
            _ => None,
        };
        let mean = mean.filter(|m| m.iter().any(|v| *v != T::zero()));
        Ok(Elliptical {
            profile,
            dim,
            mean,
            factor,
            precision,
            log_det_shape,
            conditioning,
        })
    }

    fn centered(&self, x: &[T]) -> Vec<T> {
        match &self.mean {
            Some(m) => x.iter().zip(m).map(|(&a, &b)| a - b).collect(),
            None => x.to_vec(),
        }
    }

    /// Whitened coordinates `u = L⁻¹(x - μ)` and `Σ⁻¹(x - μ) = L⁻ᵀ u`.
    fn whiten(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let c = self.centered(x);
        match &self.factor {
            None => (c.clone(), c),
            Some(l) => {
                let u = solve_lower(l, &c);
                let g = solve_lower_transpose(l, &u);
                (u, g)
            }
        }
    }

    fn df(&self) -> T {
        T::from_usize_lossy(self.dim)
    }

    /// `v(r)`
    fn v(&self, r: T) -> T {
        let half = T::c(0.5);
        match self.profile {
            Profile::Gaussian => r * r * half,
            Profile::StudentT { dof } => (dof + self.df()) * half * (r * r / dof).ln_1p(),
            Profile::Laplace => {
                let r = r.max(T::c(LAPLACE_MIN_RADIUS));
                let nu = T::one() - self.df() * half;
                -nu * half * (r * r * half).ln() - log_bessel_k(nu, T::c(2f64.sqrt()) * r).unwrap_or(T::nan())
            }
            Profile::Logistic { scale } => {
                let t = r / scale;
                t + T::c(2.0) * (-t).exp().ln_1p()
            }
        }
    }

    /// `(v'(r)/r, v''(r))`
    fn dv(&self, r: T) -> (T, T) {
        let one = T::one();
        let two = T::c(2.0);
        match self.profile {
            Profile::Gaussian => (one, one),
            Profile::StudentT { dof } => {
                let k = dof + self.df();
                let den = dof + r * r;
                (k / den, k * (dof - r * r) / (den * den))
            }
            Profile::Laplace => {
                let r = r.max(T::c(LAPLACE_MIN_RADIUS));
                let mu = self.df() * T::c(0.5) - one;
                let z = T::c(2f64.sqrt()) * r;
                let ratio = (log_bessel_k(mu + one, z).unwrap_or(T::nan())
                    - log_bessel_k(mu, z).unwrap_or(T::nan()))
                .exp();
                let phi1 = ratio / z;
                let dratio = ratio * ratio - (two * mu + one) * ratio / z - one;
                let phi2 = (dratio / z - ratio / (z * z)) / z;
                (two * phi1, two * phi1 + T::c(4.0) * r * r * phi2)
            }
            Profile::Logistic { scale } => {
                let t = r / scale;
                let th = (t * T::c(0.5)).tanh();
                let s2 = scale * scale;
                let over_r = if t < T::c(1e-4) {
                    (one - t * t / T::c(12.0)) / (two * s2)
                } else {
                    th / (scale * r)
                };
                (over_r, (one - th * th) / (two * s2))
            }
        }
    }

    fn sample_isotropic(&self, rng: &mut dyn RngCore) -> Vec<T> {
        let d = self.dim;
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let out: Vec<f64> = match self.profile {
            Profile::Gaussian => z,
            Profile::StudentT { dof } => {
                let w: f64 = ChiSquared::new(dof.as_f64()).unwrap().sample(rng);
                let s = (dof.as_f64() / w).sqrt();
                z.into_iter().map(|v| v * s).collect()
            }
            Profile::Laplace => {
                let y: f64 = rng.sample(Exp1);
                let s = y.sqrt();
                z.into_iter().map(|v| v * s).collect()
            }
            Profile::Logistic { scale } => {
                let s = scale.as_f64();
                let gamma = Gamma::new(d as f64, s).unwrap();
                let radius = loop {
                    let r: f64 = gamma.sample(rng);
                    let acc = 1.0 / (1.0 + (-r / s).exp()).powi(2);
                    if rng.random::<f64>() < acc {
                        break r;
                    }
                };
                let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                z.into_iter().map(|v| v * radius / nz).collect()
            }
        };
        out.into_iter().map(T::c).collect()
    }
}

impl<T: Real> Target<T> for Elliptical<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, x: &[T]) -> T {
        let (u, _) = self.whiten(x);
        self.v(norm(&u))
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let (u, g) = self.whiten(x);
        let (over_r, _) = self.dv(norm(&u));
        g.into_iter().map(|v| v * over_r).collect()
    }

    fn hessian(&self, x: &[T]) -> Option<Mat<T>> {
        let (u, g) = self.whiten(x);
        let r = norm(&u);
        let (over_r, second) = self.dv(r);
        let base = match &self.precision {
            Some(p) => p.scale(over_r),
            None => Mat::identity(self.dim).scale(over_r),
        };
        let mut h = base;
        if r > T::c(1e-6) {
            let coef = (second - over_r) / (r * r);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    h[(i, j)] = h[(i, j)] + coef * g[i] * g[j];
                }
            }
        }
        Some(h)
    }

    fn conditioning(&self) -> Option<Conditioning<T>> {
        self.conditioning
    }

    fn log_normalizer(&self) -> Option<T> {
        let d = self.dim as f64;
        let half_ld = self.log_det_shape.as_f64() * 0.5;
        let c = match self.profile {
            Profile::Gaussian => 0.5 * d * (2.0 * PI).ln() + half_ld,
            Profile::StudentT { dof } => {
                let nu = dof.as_f64();
                0.5 * d * (nu * PI).ln() + half_ld + ln_gamma(0.5 * nu) - ln_gamma(0.5 * (nu + d))
            }
            Profile::Laplace => -LN_2 + 0.5 * d * (2.0 * PI).ln() + half_ld,
            Profile::Logistic { scale } => {
                // ∫ r^{d-1} e^{-r}/(1+e^{-r})² dr = Γ(d) η(d-1)
                let eta = match self.dim {
                    1 => 0.5,
                    2 => LN_2,
                    k => (1.0 - 2f64.powi(2 - k as i32)) * zeta_int::<f64>(k as i32 - 1).ok()?,
                };
                half_ld + LN_2 + 0.5 * d * PI.ln() - ln_gamma(0.5 * d)
                    + d * scale.as_f64().ln()
                    + ln_gamma(d)
                    + eta.ln()
            }
        };
        Some(T::c(c))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<T>> {
        let iso = self.sample_isotropic(rng);
        let mut x = match &self.factor {
            Some(l) => l.matvec(&iso),
            None => iso,
        };
        if let Some(m) = &self.mean {
            x.iter_mut().zip(m).for_each(|(a, &b)| *a = *a + b);
        }
        Ok(x)
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn radial_potential(&self, r: T) -> Option<T> {
        if self.factor.is_some() || self.mean.is_some() {
            return None;
        }
        Some(self.v(r))
    }

    fn radial_potential_deriv(&self, r: T) -> Option<T> {
        if self.factor.is_some() || self.mean.is_some() {
            return None;
        }
        Some(self.dv(r).0 * r)
    }

    fn name(&self) -> String {
        let fam = match self.profile {
            Profile::Gaussian => "gaussian".to_string(),
            Profile::StudentT { dof } => format!("student_t(dof={dof})"),
            Profile::Laplace => "laplace".to_string(),
            Profile::Logistic { scale } => format!("logistic(scale={scale})"),
        };
        let kind = if self.factor.is_some() { "anisotropic" } else { "isotropic" };
        format!("{kind} {fam}, d = {}", self.dim)
    }
}

/// Neal's funnel in `R^{d+1}`: `z ~ N(0, 4)`, `x_i | z ~ N(0, e^z)`, with
/// coordinates ordered `(z, x_1, ..., x_d)` and potential
/// `V = z²/8 + Σ_i x_i² e^{-z}/2 + d z/2`.
#[derive(Debug, Clone)]
pub struct Funnel {
    d: usize,
}

impl Funnel {
    pub fn new(d: usize) -> Self {
        Funnel { d }
    }
}

impl<T: Real> Target<T> for Funnel {
    fn dim(&self) -> usize {
        self.d + 1
    }

    fn potential(&self, x: &[T]) -> T {
        let z = x[0];
        let half = T::c(0.5);
        let ss: T = x[1..].iter().map(|&v| v * v).sum();
        z * z / T::c(8.0) + ss * (-z).exp() * half + T::from_usize_lossy(self.d) * z * half
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let z = x[0];
        let half = T::c(0.5);
        let ez = (-z).exp();
        let ss: T = x[1..].iter().map(|&v| v * v).sum();
        let mut g = Vec::with_capacity(x.len());
        g.push(z / T::c(4.0) - ss * ez * half + T::from_usize_lossy(self.d) * half);
        g.extend(x[1..].iter().map(|&v| v * ez));
        g
    }

    fn hessian(&self, x: &[T]) -> Option<Mat<T>> {
        let n = self.d + 1;
        let z = x[0];
        let ez = (-z).exp();
        let ss: T = x[1..].iter().map(|&v| v * v).sum();
        let mut h = Mat::zeros(n, n);
        h[(0, 0)] = T::c(0.25) + ss * ez * T::c(0.5);
        for i in 1..n {
            h[(0, i)] = -x[i] * ez;
            h[(i, 0)] = -x[i] * ez;
            h[(i, i)] = ez;
        }
        Some(h)
    }

    fn log_normalizer(&self) -> Option<T> {
        Some(T::c(0.5 * (8.0 * PI).ln() + 0.5 * self.d as f64 * (2.0 * PI).ln()))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<T>> {
        let z = 2.0 * rng.sample::<f64, _>(StandardNormal);
        let sd = (0.5 * z).exp();
        let mut out = Vec::with_capacity(self.d + 1);
        out.push(T::c(z));
        for _ in 0..self.d {
            out.push(T::c(sd * rng.sample::<f64, _>(StandardNormal)));
        }
        Ok(out)
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("funnel, d = {}", self.d)
    }
}

/// Central finite-difference gradient of `f` (used by validation checks).
pub fn fd_gradient<T: Real>(f: impl Fn(&[T]) -> T, x: &[T], h: T) -> Vec<T> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = x[i];
            xp[i] = xi + h;
            let fp = f(&xp);
            xp[i] = xi - h;
            let fm = f(&xp);
            xp[i] = xi;
            (fp - fm) / (h + h)
        })
        .collect()
}
