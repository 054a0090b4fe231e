//! Gaussian preconditioning: Laplace approximation, full-rank Gaussian VI,
//! whitened targets and the composite map `x ↦ A T_λ(x) + m`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{Dictionary, Weights};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Lu, Mat};
use crate::rng::{stage_rng, STREAM_WHITENING};
use crate::scalar::{dot, norm, Real};
use crate::targets::{Target, TargetModel};

/// Affine map `x ↦ A x + m` with `A Aᵀ = Σ`.
#[derive(Debug, Clone)]
pub struct WhiteningTransform<T: Real = f64> {
    mean: Vec<T>,
    factor: Mat<T>,
    lu: Lu<T>,
    log_abs_det: T,
}

impl<T: Real> PartialEq for WhiteningTransform<T> {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.factor == other.factor
    }
}

impl<T: Real> WhiteningTransform<T> {
    pub fn new(mean: Vec<T>, factor: Mat<T>) -> Result<Self> {
        if !factor.is_square() || factor.nrows() != mean.len() {
            return Err(Error::Dimension {
                expected: mean.len(),
                got: factor.nrows(),
            });
        }
        let lu = Lu::new(&factor)
            .map_err(|p| Error::Numerical(format!("whitening factor is singular (pivot {p})")))?;
        let log_abs_det = lu.log_abs_det();
        Ok(WhiteningTransform {
            mean,
            factor,
            lu,
            log_abs_det,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(vec![T::zero(); dim], Mat::identity(dim)).expect("identity is invertible")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn factor(&self) -> &Mat<T> {
        &self.factor
    }

    pub fn log_abs_det(&self) -> T {
        self.log_abs_det
    }

    /// `Σ = A Aᵀ`
    pub fn covariance(&self) -> Mat<T> {
        self.factor.matmul(&self.factor.transpose()).symmetrize()
    }

    /// `A x + m`
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = self.factor.matvec(x);
        y.iter_mut().zip(&self.mean).for_each(|(a, &b)| *a = *a + b);
        y
    }

    /// `A⁻¹ (y - m)`
    pub fn invert(&self, y: &[T]) -> Vec<T> {
        let c: Vec<T> = y.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        self.lu.solve(&c)
    }

    pub fn to_record(&self) -> WhiteningRecord {
        WhiteningRecord {
            mean: self.mean.iter().map(|v| v.as_f64()).collect(),
            factor: self
                .factor
                .to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(|v| v.as_f64()).collect())
                .collect(),
            log_abs_det: self.log_abs_det.as_f64(),
        }
    }

    pub fn from_record(rec: &WhiteningRecord) -> Result<Self> {
        let rows: Vec<Vec<T>> = rec
            .factor
            .iter()
            .map(|r| r.iter().map(|&v| T::c(v)).collect())
            .collect();
        Self::new(rec.mean.iter().map(|&v| T::c(v)).collect(), Mat::from_rows(&rows)?)
    }
}

/// Serialized form of a [`WhiteningTransform`] (row-major factor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningRecord {
    pub mean: Vec<f64>,
    pub factor: Vec<Vec<f64>>,
    pub log_abs_det: f64,
}

/// Laplace approximation `N(x*, ∇²V(x*)⁻¹)` found by damped Newton with
/// Armijo backtracking from `x0`.
pub fn laplace_approx<T: Real>(target: &dyn Target<T>, x0: &[T], tol: T) -> Result<WhiteningTransform<T>> {
    const MAX_ITER: usize = 500;
    if !(tol > T::zero()) {
        return Err(Error::Config(format!("tolerance {tol} must be positive")));
    }
    if x0.len() != target.dim() {
        return Err(Error::Dimension {
            expected: target.dim(),
            got: x0.len(),
        });
    }
    let hessian = |x: &[T]| {
        target
            .hessian(x)
            .ok_or_else(|| Error::Unsupported(format!("{} has no Hessian", target.name())))
    };
    let mut x = x0.to_vec();
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let g = target.gradient(&x);
        if norm(&g) <= tol {
            converged = true;
            break;
        }
        let h = hessian(&x)?;
        let mut dir: Vec<T> = match Cholesky::new(&h) {
            Ok(ch) => ch.solve(&g).into_iter().map(|v| -v).collect(),
            Err(_) => g.iter().map(|&v| -v).collect(),
        };
        let mut slope = dot(&g, &dir);
        if !(slope < T::zero()) {
            dir = g.iter().map(|&v| -v).collect();
            slope = -dot(&g, &g);
        }
        let v0 = target.potential(&x);
        let mut t = T::one();
        let armijo = T::c(1e-4);
        let mut moved = false;
        while t > T::c(1e-16) {
            let trial: Vec<T> = x.iter().zip(&dir).map(|(&a, &b)| a + t * b).collect();
            let vt = target.potential(&trial);
            if vt.is_finite() && vt <= v0 + armijo * t * slope {
                x = trial;
                moved = true;
                break;
            }
            t = t * T::c(0.5);
        }
        if !moved {
            break;
        }
    }
    if !converged {
        let g = norm(&target.gradient(&x));
        if g > tol {
            return Err(Error::NonConvergence {
                function: "laplace_approx",
                iterations: MAX_ITER,
                detail: format!("gradient norm {g} above tolerance {tol}"),
            });
        }
    }
    let h = hessian(&x)?;
    let ch = Cholesky::new(&h.symmetrize()).map_err(|p| Error::NonInvertibleHessian {
        min_pivot: p.as_f64(),
    })?;
    let sigma = ch.inverse();
    let a = Cholesky::new(&sigma)
        .map_err(|p| Error::NonInvertibleHessian {
            min_pivot: p.as_f64(),
        })?
        .into_factor();
    WhiteningTransform::new(x, a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GviConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Initial diagonal of the Cholesky factor.
    pub init_scale: f64,
}

impl Default for GviConfig {
    fn default() -> Self {
        GviConfig {
            step_size: 7e-3,
            iterations: 10_000,
            batch_size: 100,
            seed: 0,
            init_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GviOutput<T: Real> {
    pub transform: WhiteningTransform<T>,
    /// Number of rejected steps (each halves the step size).
    pub step_halvings: usize,
    pub final_step_size: f64,
}

/// Smallest admissible diagonal entry of the Gaussian VI factor.
pub const GVI_MIN_DIAGONAL: f64 = 1e-10;

/// `E[V(m + A Z)] - Σ log A_ii` over a fixed batch of standard normal draws.
pub fn gvi_objective<T: Real>(target: &dyn Target<T>, mean: &[T], factor: &Mat<T>, batch: &[Vec<T>]) -> T {
    let n = T::from_usize_lossy(batch.len());
    let pot: T = batch
        .iter()
        .map(|z| {
            let mut y = factor.matvec(z);
            y.iter_mut().zip(mean).for_each(|(a, &b)| *a = *a + b);
            target.potential(&y)
        })
        .sum();
    pot / n - factor.diag().iter().map(|d| d.ln()).sum::<T>()
}

/// Full-rank Gaussian VI by reparametrized stochastic gradient descent on
/// `(m, A)` with `A` lower triangular with positive diagonal.
pub fn gaussian_vi<T: Real>(target: &dyn Target<T>, config: &GviConfig) -> Result<GviOutput<T>> {
    if !(config.step_size > 0.0) || config.batch_size == 0 || !(config.init_scale > 0.0) {
        return Err(Error::Config("GVI step size, batch size and initial scale must be positive".into()));
    }
    let d = target.dim();
    let mut rng = stage_rng(config.seed, STREAM_WHITENING);
    let mut m = vec![T::zero(); d];
    let mut a = Mat::identity(d).scale(T::c(config.init_scale));
    let mut h = config.step_size;
    let mut halvings = 0usize;
    let nf = T::from_usize_lossy(config.batch_size);
    let mut z = vec![T::zero(); d];
    for _ in 0..config.iterations {
        let mut gm = vec![T::zero(); d];
        let mut ga: Mat<T> = Mat::zeros(d, d);
        for _ in 0..config.batch_size {
            z.iter_mut().for_each(|v| *v = T::c(rng.sample(StandardNormal)));
            let mut y = a.matvec(&z);
            y.iter_mut().zip(&m).for_each(|(u, &v)| *u = *u + v);
            let g = target.gradient(&y);
            for i in 0..d {
                gm[i] = gm[i] + g[i];
                for j in 0..=i {
                    ga[(i, j)] = ga[(i, j)] + g[i] * z[j];
                }
            }
        }
        for i in 0..d {
            gm[i] = gm[i] / nf;
            for j in 0..=i {
                ga[(i, j)] = ga[(i, j)] / nf;
            }
            ga[(i, i)] = ga[(i, i)] - T::one() / a[(i, i)];
        }
        if gm.iter().any(|v| !v.is_finite()) || (0..d).any(|i| (0..=i).any(|j| !ga[(i, j)].is_finite())) {
            return Err(Error::Numerical("non-finite Gaussian VI gradient".into()));
        }
        loop {
            let step = T::c(h);
            let ok = (0..d).all(|i| a[(i, i)] - step * ga[(i, i)] >= T::c(GVI_MIN_DIAGONAL));
            if ok {
                for i in 0..d {
                    m[i] = m[i] - step * gm[i];
                    for j in 0..=i {
                        a[(i, j)] = a[(i, j)] - step * ga[(i, j)];
                    }
                }
                break;
            }
            h *= 0.5;
            halvings += 1;
            if h < 1e-300 {
                return Err(Error::Numerical("Gaussian VI step size underflow".into()));
            }
        }
    }
    Ok(GviOutput {
        transform: WhiteningTransform::new(m, a)?,
        step_halvings: halvings,
        final_step_size: h,
    })
}

/// `Ṽ(x) = V(A x + m)`.
#[derive(Debug)]
pub struct WhitenedTarget<T: Real> {
    inner: TargetModel<T>,
    transform: WhiteningTransform<T>,
}

impl<T: Real> WhitenedTarget<T> {
    pub fn transform(&self) -> &WhiteningTransform<T> {
        &self.transform
    }

    pub fn inner(&self) -> &TargetModel<T> {
        &self.inner
    }
}

impl<T: Real> Target<T> for WhitenedTarget<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn potential(&self, x: &[T]) -> T {
        self.inner.potential(&self.transform.apply(x))
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        let g = self.inner.gradient(&self.transform.apply(x));
        self.transform.factor.tr_matvec(&g)
    }

    fn hessian(&self, x: &[T]) -> Option<Mat<T>> {
        let h = self.inner.hessian(&self.transform.apply(x))?;
        let a = &self.transform.factor;
        Some(a.transpose().matmul(&h).matmul(a).symmetrize())
    }

    fn log_normalizer(&self) -> Option<T> {
        Some(self.inner.log_normalizer()? - self.transform.log_abs_det)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Result<Vec<T>> {
        Ok(self.transform.invert(&self.inner.sample(rng)?))
    }

    fn has_sampler(&self) -> bool {
        self.inner.has_sampler()
    }

    fn name(&self) -> String {
        format!("whitened {}", self.inner.name())
    }
}

pub fn whiten_target<T: Real>(target: TargetModel<T>, w: &WhiteningTransform<T>) -> Result<TargetModel<T>> {
    if target.dim() != w.dim() {
        return Err(Error::Dimension {
            expected: target.dim(),
            got: w.dim(),
        });
    }
    Ok(Arc::new(WhitenedTarget {
        inner: target,
        transform: w.clone(),
    }))
}

/// `A T_λ(x) + m`, a sampler for `(T_comp)_♯ N(0, I)` with a tractable density.
#[derive(Debug, Clone)]
pub struct CompositeMap<T: Real = f64> {
    pub whitening: WhiteningTransform<T>,
    pub dict: Dictionary<T>,
    pub weights: Weights<T>,
}

impl<T: Real> CompositeMap<T> {
    pub fn new(whitening: WhiteningTransform<T>, dict: Dictionary<T>, weights: Weights<T>) -> Result<Self> {
        if whitening.dim() != dict.dim() {
            return Err(Error::Dimension {
                expected: dict.dim(),
                got: whitening.dim(),
            });
        }
        if weights.len() != dict.len() {
            return Err(Error::Dimension {
                expected: dict.len(),
                got: weights.len(),
            });
        }
        Ok(CompositeMap {
            whitening,
            dict,
            weights,
        })
    }

    pub fn push(&self, x: &[T]) -> Vec<T> {
        composite_push(self, x)
    }

    pub fn log_density(&self, y: &[T]) -> T {
        composite_log_density(self, y)
    }

    /// Preimage of `y` under the composite map.
    pub fn preimage(&self, y: &[T]) -> Vec<T> {
        let u = self.whitening.invert(y);
        let s = norm(&u);
        if s == T::zero() {
            return u;
        }
        let r = self.dict.invert_radial(&self.weights, s);
        u.into_iter().map(|v| v * r / s).collect()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<T> {
        let x: Vec<T> = (0..self.dict.dim())
            .map(|_| T::c(rng.sample(StandardNormal)))
            .collect();
        self.push(&x)
    }
}

pub fn composite_push<T: Real>(map: &CompositeMap<T>, x: &[T]) -> Vec<T> {
    map.whitening.apply(&map.dict.apply_map(&map.weights, x))
}

/// Log-density of `(T_comp)_♯ N(0, I)` at `y`.
pub fn composite_log_density<T: Real>(map: &CompositeMap<T>, y: &[T]) -> T {
    let x = map.preimage(y);
    let r = norm(&x);
    let d = T::from_usize_lossy(x.len());
    let log_rho = -dot(&x, &x) * T::c(0.5) - d * T::c(0.5 * (2.0 * PI).ln());
    log_rho - map.dict.log_det_jacobian(&map.weights, r) - map.whitening.log_abs_det()
}
