//! Gram matrix of the radial dictionary under the chi law.
//!
//! `Q_ij = E[Ψ_i(‖X‖) Ψ_j(‖X‖)]` for `X ~ N(0, I_d)`. Because every basis
//! function is piecewise linear, each entry is a finite combination of
//! truncated chi moments `M_n(a, b) = ∫_a^b r^n dρ̃(r)` with `n ≤ 2`, which
//! in turn reduce to upper incomplete gamma functions.
//! The matrix is factored once; every projected-gradient step reuses the factor.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution};

use crate::basis::Dictionary;
use crate::error::{domain, Error, Result};
use crate::linalg::{Cholesky, Mat};
use crate::scalar::Real;
use crate::specfun::{ln_gamma, regularized_gamma, SpecFunConfig};

/// Diagonal entries below this carry no chi mass and are dropped before factoring.
pub const NEGLIGIBLE_DIAGONAL: f64 = 1e-12;

/// `M_n(a, b) = ∫_a^b r^n dρ̃(r)`; `b` may be `+∞`.
pub fn truncated_moment<T: Real>(dim: usize, n: u32, a: T, b: T) -> Result<T> {
    if dim == 0 {
        return Err(domain("truncated_moment", "dimension must be positive"));
    }
    if !(a >= T::zero()) || !(b >= a) {
        return Err(domain("truncated_moment", format!("need 0 <= a <= b, got a = {a}, b = {b}")));
    }
    if a == b {
        return Ok(T::zero());
    }
    let half = T::c(0.5);
    let d = T::from_usize_lossy(dim);
    let nf = T::c(f64::from(n));
    let s = (nf + d) * half;
    let cfg = SpecFunConfig::for_type::<T>();
    let xa = a * a * half;
    let xb = if b.is_infinite() { T::infinity() } else { b * b * half };
    let (pa, qa) = regularized_gamma(s, xa, &cfg)?;
    let (pb, qb) = regularized_gamma(s, xb, &cfg)?;
    let diff = if xb <= s { pb - pa } else { qa - qb };
    let log_scale = nf * half * T::c(2f64.ln()) + ln_gamma(s) - ln_gamma(d * half);
    Ok((log_scale.exp() * diff).max(T::zero()))
}

/// Chi-law mass of each partition cell `I_0, ..., I_J, I_{J+1}`.
pub fn interval_masses<T: Real>(dict: &Dictionary<T>) -> Result<Vec<T>> {
    let b = dict.breakpoints();
    let mut out = Vec::with_capacity(b.len());
    for w in b.windows(2) {
        out.push(truncated_moment(dict.dim(), 0, w[0], w[1])?);
    }
    out.push(truncated_moment(dict.dim(), 0, *b.last().unwrap(), T::infinity())?);
    Ok(out)
}

/// Linear form `c0 + c1 r` of a clamped ramp on a sub-interval where it is affine.
fn ramp_piece<T: Real>(start: T, width: T, mid: T) -> (T, T) {
    if mid <= start {
        (T::zero(), T::zero())
    } else if mid >= start + width {
        (T::one(), T::zero())
    } else {
        (-start / width, T::one() / width)
    }
}

/// `∫ Ψ_i Ψ_j dρ̃` from the piecewise-affine structure of both ramps.
fn gram_entry<T: Real>(dict: &Dictionary<T>, i: usize, j: usize) -> Result<T> {
    let (si, wi) = (dict.ramp_start(i), dict.ramp_width(i));
    let (sj, wj) = (dict.ramp_start(j), dict.ramp_width(j));
    let mut cuts = [si, si + wi, sj, sj + wj];
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let d = dict.dim();
    let mut total = T::zero();
    for w in cuts.windows(2) {
        let (u, v) = (w[0], w[1]);
        if !(v > u) {
            continue;
        }
        let mid = (u + v) * T::c(0.5);
        let (pi, qi) = ramp_piece(si, wi, mid);
        let (pj, qj) = ramp_piece(sj, wj, mid);
        if (pi == T::zero() && qi == T::zero()) || (pj == T::zero() && qj == T::zero()) {
            continue;
        }
        let c0 = pi * pj;
        let c1 = pi * qj + qi * pj;
        let c2 = qi * qj;
        if c0 != T::zero() {
            total = total + c0 * truncated_moment(d, 0, u, v)?;
        }
        if c1 != T::zero() {
            total = total + c1 * truncated_moment(d, 1, u, v)?;
        }
        if c2 != T::zero() {
            total = total + c2 * truncated_moment(d, 2, u, v)?;
        }
    }
    total = total + truncated_moment(d, 0, cuts[3], T::infinity())?;
    Ok(total)
}

/// Closed-form Gram matrix together with its Cholesky factor.
///
/// Basis functions whose diagonal entry is below [`NEGLIGIBLE_DIAGONAL`] are
/// excluded from the factor; `active` maps factor rows to dictionary indices.
#[derive(Debug, Clone)]
pub struct GramMatrix<T: Real = f64> {
    q: Mat<T>,
    active: Vec<usize>,
    chol: Cholesky<T>,
}

impl<T: Real> GramMatrix<T> {
    pub fn new(dict: &Dictionary<T>) -> Result<Self> {
        let n = dict.len();
        let mut q = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = gram_entry(dict, i, j)?;
                q[(i, j)] = v;
                q[(j, i)] = v;
            }
        }
        Self::from_matrix(q)
    }

    /// Wraps an arbitrary symmetric positive semidefinite matrix (used for
    /// metric-projection tests and perturbed-matrix controls).
    pub fn from_matrix(q: Mat<T>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::Dimension {
                expected: q.nrows(),
                got: q.ncols(),
            });
        }
        let n = q.nrows();
        let active: Vec<usize> = (0..n)
            .filter(|&i| q[(i, i)] >= T::c(NEGLIGIBLE_DIAGONAL))
            .collect();
        if active.is_empty() {
            return Err(Error::IllConditioned("every basis function has zero mass".into()));
        }
        let chol = Cholesky::new(&q.select(&active)).map_err(|pivot| {
            Error::IllConditioned(format!(
                "Cholesky pivot {pivot}; try a larger mesh delta"
            ))
        })?;
        Ok(GramMatrix { q, active, chol })
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Dictionary indices kept in the factorization.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Cholesky factor of `Q` restricted to the active indices.
    pub fn factor(&self) -> &Mat<T> {
        self.chol.factor()
    }

    pub fn cholesky(&self) -> &Cholesky<T> {
        &self.chol
    }

    /// `Q⁻¹ v` on the active coordinates; inactive coordinates map to zero.
    pub fn solve(&self, v: &[T]) -> Vec<T> {
        let sub: Vec<T> = self.active.iter().map(|&i| v[i]).collect();
        let x = self.chol.solve(&sub);
        let mut out = vec![T::zero(); self.dim()];
        for (&i, xi) in self.active.iter().zip(x) {
            out[i] = xi;
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        self.q.matvec(v)
    }

    /// `vᵀ Q v`
    pub fn quad_form(&self, v: &[T]) -> T {
        crate::scalar::dot(v, &self.q.matvec(v))
    }
}

/// Monte Carlo estimate of `Q` from `n` chi draws (test and validation harness).
pub fn gram_mc<T: Real, R: Rng + ?Sized>(dict: &Dictionary<T>, n: usize, rng: &mut R) -> Mat<T> {
    let m = dict.len();
    let chi2 = ChiSquared::new(dict.dim() as f64).expect("positive dof");
    let mut acc = vec![0.0f64; m * m];
    let mut psi = vec![T::zero(); m];
    for _ in 0..n {
        let r = T::c(chi2.sample(rng).sqrt());
        dict.eval_basis_into(r, &mut psi);
        for i in 0..m {
            let pi = psi[i].as_f64();
            if pi == 0.0 {
                continue;
            }
            for j in 0..m {
                acc[i * m + j] += pi * psi[j].as_f64();
            }
        }
    }
    let inv = 1.0 / n as f64;
    Mat::from_row_major(m, m, acc.into_iter().map(|v| T::c(v * inv)).collect())
}

/// Largest entrywise deviation between the closed-form `Q` and a Monte Carlo estimate.
pub fn gram_mc_validate<T: Real, R: Rng + ?Sized>(
    dict: &Dictionary<T>,
    gram: &GramMatrix<T>,
    n_samples: usize,
    rng: &mut R,
) -> Result<T> {
    if n_samples < 10_000 {
        return Err(domain("gram_mc_validate", format!("n_samples = {n_samples} < 10^4")));
    }
    Ok(gram_mc(dict, n_samples, rng).max_abs_diff(gram.matrix()))
}
