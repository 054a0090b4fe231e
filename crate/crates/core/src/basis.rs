//! Piecewise-linear radial dictionary and the radial maps it parametrizes.
//!
//! The dictionary consists of `J + 1` clamped ramps `Ψ_j(r) = clamp((r - a_j)/δ_j, 0, 1)`.
//! `Ψ_0` rises on `[0, √d - R]`; `Ψ_1..Ψ_J` are equi-spaced ramps of width `δ`
//! tiling `[√d - R, a_J + δ] ⊇ [√d - R, √d + R]`. A weight vector `λ ≥ 0`
//! defines the radial profile `g_λ(r) = αr + ⟨λ, Ψ(r)⟩` and the map
//! `T_λ(x) = g_λ(‖x‖) x / ‖x‖`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{norm, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary<T: Real = f64> {
    dim: usize,
    cutoff: T,
    mesh: T,
    alpha: T,
    /// ramp start `a_j` for `j = 0..=J` (with `a_0 = 0`)
    starts: Vec<T>,
    /// ramp width `δ_j` (with `δ_0 = √d - R`)
    widths: Vec<T>,
}

impl<T: Real> Dictionary<T> {
    /// Builds the dictionary for dimension `d`, cutoff `R`, mesh `δ` and slope `α`.
    pub fn new(dim: usize, cutoff: T, mesh: T, alpha: T) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        let sqrt_d = T::from_usize_lossy(dim).sqrt();
        if !(cutoff > T::zero()) {
            return Err(Error::Config(format!("cutoff R = {cutoff} must be positive")));
        }
        if !(cutoff < sqrt_d) {
            return Err(Error::Config(format!(
                "cutoff R = {cutoff} must be below sqrt(d) = {sqrt_d} so every knot is positive"
            )));
        }
        if !(mesh > T::zero()) || mesh > cutoff + cutoff {
            return Err(Error::Config(format!("mesh delta = {mesh} must lie in (0, 2R]")));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(Error::Config(format!("slope alpha = {alpha} must be positive")));
        }
        let ratio = (cutoff + cutoff) / mesh;
        // tolerate rounding when δ divides 2R exactly
        let n_ramps = (ratio - T::c(1e-9)).ceil().to_usize().unwrap_or(0) + 1;
        let first = sqrt_d - cutoff;
        let mut starts = Vec::with_capacity(n_ramps + 1);
        let mut widths = Vec::with_capacity(n_ramps + 1);
        starts.push(T::zero());
        widths.push(first);
        for j in 0..n_ramps {
            starts.push(first + T::from_usize_lossy(j) * mesh);
            widths.push(mesh);
        }
        Ok(Dictionary {
            dim,
            cutoff,
            mesh,
            alpha,
            starts,
            widths,
        })
    }

    /// Dictionary with `R = √(log d)` and `δ = d^{-1/6}`.
    pub fn with_defaults(dim: usize, alpha: T) -> Result<Self> {
        let (r, delta) = default_cutoff_and_mesh::<T>(dim);
        Self::new(dim, r, delta, alpha)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> T {
        self.cutoff
    }

    pub fn mesh(&self) -> T {
        self.mesh
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Same knots, different slope.
    pub fn with_alpha(&self, alpha: T) -> Result<Self> {
        Self::new(self.dim, self.cutoff, self.mesh, alpha)
    }

    /// Number of basis functions, `J + 1`.
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Number of interior ramps `J`.
    pub fn num_interior(&self) -> usize {
        self.starts.len() - 1
    }

    /// Interior knots `a_1..a_J`.
    pub fn knots(&self) -> &[T] {
        &self.starts[1..]
    }

    pub fn ramp_start(&self, j: usize) -> T {
        self.starts[j]
    }

    pub fn ramp_width(&self, j: usize) -> T {
        self.widths[j]
    }

    pub fn ramp_end(&self, j: usize) -> T {
        self.starts[j] + self.widths[j]
    }

    /// Endpoints of the partition `I_0 = [0, a_1]`, `I_ℓ = [a_ℓ, a_ℓ + δ]`,
    /// followed by the unbounded plateau `I_{J+1}`: `[0, a_1, ..., a_J, a_J + δ]`.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut b = self.starts.clone();
        b.push(self.ramp_end(self.len() - 1));
        b
    }

    /// Index of the ramp whose half-open interval `[a_ℓ, a_ℓ + δ_ℓ)` contains
    /// `r`, or `J + 1` on the final plateau.
    pub fn interval_of(&self, r: T) -> usize {
        // starts are increasing and the ramps tile [0, a_J + δ)
        let n = self.len();
        if r >= self.ramp_end(n - 1) {
            return n;
        }
        match self
            .starts
            .binary_search_by(|a| a.partial_cmp(&r).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    pub fn eval_basis(&self, r: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        self.eval_basis_into(r, &mut out);
        out
    }

    pub fn eval_basis_into(&self, r: T, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.len());
        for ((o, &a), &w) in out.iter_mut().zip(&self.starts).zip(&self.widths) {
            *o = ((r - a) / w).max(T::zero()).min(T::one());
        }
    }

    /// `Ψ'(r)`, using the right derivative at knots.
    pub fn eval_basis_deriv(&self, r: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        let l = self.interval_of(r);
        if l < self.len() && r >= T::zero() {
            out[l] = T::one() / self.widths[l];
        }
        out
    }

    /// `g_λ(r) = αr + ⟨λ, Ψ(r)⟩`
    pub fn radial_value(&self, weights: &Weights<T>, r: T) -> T {
        let lam = weights.as_slice();
        debug_assert_eq!(lam.len(), self.len());
        let l = self.interval_of(r);
        let mut g = self.alpha * r;
        for &v in &lam[..l.min(lam.len())] {
            g = g + v;
        }
        if l < lam.len() {
            g = g + lam[l] * ((r - self.starts[l]) / self.widths[l]).max(T::zero());
        }
        g
    }

    /// `g'_λ(r) = α + ⟨λ, Ψ'(r)⟩` (right derivative at knots).
    pub fn radial_deriv(&self, weights: &Weights<T>, r: T) -> T {
        let l = self.interval_of(r);
        if l < self.len() {
            self.alpha + weights.as_slice()[l] / self.widths[l]
        } else {
            self.alpha
        }
    }

    /// `T_λ(x) = g_λ(‖x‖) x / ‖x‖`, with `T_λ(0) = 0`.
    pub fn apply_map(&self, weights: &Weights<T>, x: &[T]) -> Vec<T> {
        let r = norm(x);
        if r == T::zero() {
            return vec![T::zero(); x.len()];
        }
        let scale = self.radial_value(weights, r) / r;
        x.iter().map(|&v| v * scale).collect()
    }

    /// `log det DT_λ(x)` at `‖x‖ = r`:
    /// `(d-1) log(α + ⟨λ,Ψ(r)⟩/r) + log(α + ⟨λ,Ψ'(r)⟩)`.
    pub fn log_det_jacobian(&self, weights: &Weights<T>, r: T) -> T {
        let dm1 = T::from_usize_lossy(self.dim - 1);
        let tangential = if r > T::zero() {
            self.radial_value(weights, r) / r
        } else {
            self.radial_deriv(weights, T::zero())
        };
        let lt = if self.dim > 1 { dm1 * tangential.ln() } else { T::zero() };
        lt + self.radial_deriv(weights, r).ln()
    }

    /// Solves `g_λ(r) = s` exactly on the linear piece that contains the solution.
    pub fn invert_radial(&self, weights: &Weights<T>, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        let lam = weights.as_slice();
        let mut g_left = T::zero();
        for l in 0..self.len() {
            let slope = self.alpha + lam[l] / self.widths[l];
            let g_right = g_left + slope * self.widths[l];
            if s < g_right {
                return self.starts[l] + (s - g_left) / slope;
            }
            g_left = g_right;
        }
        self.ramp_end(self.len() - 1) + (s - g_left) / self.alpha
    }
}

/// `R = √(log d)` and `δ = d^{-1/6}`.
pub fn default_cutoff_and_mesh<T: Real>(dim: usize) -> (T, T) {
    let d = T::from_usize_lossy(dim);
    (d.ln().sqrt(), d.powf(T::c(-1.0 / 6.0)))
}

/// Nonnegative weight vector `λ ∈ R₊^{J+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights<T: Real = f64>(Vec<T>);

impl<T: Real> Weights<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= T::zero())) {
            return Err(Error::Config(format!("weight {i} = {v} is negative or NaN")));
        }
        Ok(Weights(values))
    }

    pub fn zeros(n: usize) -> Self {
        Weights(vec![T::zero(); n])
    }

    pub fn constant(n: usize, value: T) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub(crate) fn from_projection(values: Vec<T>) -> Self {
        debug_assert!(values.iter().all(|v| *v >= T::zero()));
        Weights(values)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.as_f64()).collect()
    }
}
