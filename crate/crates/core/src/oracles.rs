//! Ground-truth radial transport maps from `N(0, I_d)` to isotropic targets.
//!
//! The optimal radial map solves `F_target(Ψ*(r)) = F_χ(r)`. It is closed
//! form for the Gaussian and Student-t families; for other families the
//! target radial CDF is tabulated by cumulative quadrature and inverted with
//! monotone piecewise-cubic (PCHIP) interpolants, in `ln F` on the lower half
//! and in `-ln(1 - F)` on the upper half so both tails keep relative accuracy.
//! Radii whose chi probability falls outside the table are solved by bisection.

use std::io::Write;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_to_infinity, QuadConfig};
use crate::scalar::{norm, Real};
use crate::specfun::{chi_squared_cdf, chi_squared_sf, f_quantile, f_quantile_upper};
use crate::targets::{build_target, Family, Target, TargetModel, TargetSpec};

/// Required fraction of target radial mass inside the tabulation grid.
pub const REQUIRED_COVERAGE: f64 = 1.0 - 1e-10;

/// Tabulation grid for CDF-matched oracles. `r_max = None` grows the range
/// until the coverage requirement is met.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    pub r_max: Option<f64>,
    pub n_points: usize,
}

impl Default for RadialGrid {
    fn default() -> Self {
        RadialGrid {
            r_max: None,
            n_points: 4096,
        }
    }
}

#[derive(Debug, Clone)]
enum Kind<T: Real> {
    Linear { sigma: T },
    StudentT { dim: usize, dof: T },
    Table(Table<T>),
}

#[derive(Clone)]
struct Table<T> {
    dim: usize,
    radii: Vec<T>,
    /// `F(r_i)`, accumulated from the origin
    cdf: Vec<T>,
    /// `1 - F(r_i)`, accumulated from the tail
    sf: Vec<T>,
    /// `ln F ↦ ln r` on the lower half
    lower: Pchip<T>,
    /// `-ln(1 - F) ↦ r` on the upper half
    upper: Pchip<T>,
    log_phi: std::sync::Arc<dyn Fn(T) -> T + Send + Sync>,
    log_shift: T,
    total: T,
}

impl<T: Real> std::fmt::Debug for Table<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Table")
            .field("dim", &self.dim)
            .field("r_max", &self.radii.last())
            .field("n_points", &self.radii.len())
            .finish()
    }
}

/// Monotone radial map `Ψ*: [0, ∞) → [0, ∞)`.
#[derive(Debug, Clone)]
pub struct RadialOracle<T: Real = f64> {
    kind: Kind<T>,
}

impl<T: Real> RadialOracle<T> {
    /// `Ψ*(r)`
    pub fn eval(&self, r: T) -> T {
        if r <= T::zero() {
            return T::zero();
        }
        match &self.kind {
            Kind::Linear { sigma } => *sigma * r,
            Kind::StudentT { dim, dof } => student_map(*dim, *dof, r),
            Kind::Table(t) => t.eval(r),
        }
    }

    /// `(r_max, n_points)` for tabulated oracles.
    pub fn grid(&self) -> Option<(T, usize)> {
        match &self.kind {
            Kind::Table(t) => Some((*t.radii.last().unwrap(), t.radii.len())),
            _ => None,
        }
    }

    /// `T*(x) = Ψ*(‖x‖) x / ‖x‖`
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let r = norm(x);
        if r == T::zero() {
            return x.to_vec();
        }
        let s = self.eval(r) / r;
        x.iter().map(|&v| v * s).collect()
    }

    /// Normalized target radial CDF on the tabulation grid (tabulated oracles only).
    pub fn target_cdf(&self, s: T) -> Option<T> {
        match &self.kind {
            Kind::Table(t) => Some(t.cdf_at(s)),
            _ => None,
        }
    }

    /// Solves `F_target(s) = F_χ(r)` by bisection on the exact cumulative
    /// quadrature, bypassing the interpolant (spot validation).
    pub fn eval_by_root_finding(&self, r: T) -> Result<T> {
        match &self.kind {
            Kind::Table(t) => t.eval_exact(r),
            _ => Ok(self.eval(r)),
        }
    }

    /// Two-column CSV `r,psi` over `radii`.
    pub fn write_csv<W: Write>(&self, mut w: W, radii: &[T]) -> std::io::Result<()> {
        writeln!(w, "r,psi")?;
        for &r in radii {
            writeln!(w, "{:e},{:e}", r.as_f64(), self.eval(r).as_f64())?;
        }
        Ok(())
    }
}

/// `Ψ*(r) = σ r`, the map onto `N(0, σ² I)`.
pub fn gaussian_radial_oracle<T: Real>(sigma: T) -> Result<RadialOracle<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma = {sigma} must be positive")));
    }
    Ok(RadialOracle {
        kind: Kind::Linear { sigma },
    })
}

/// `Ψ*(r) = sqrt(d F⁻¹_{d,ν}(F_{χ²_d}(r²)))` for the isotropic Student-t target.
pub fn student_t_radial_oracle<T: Real>(dim: usize, dof: T) -> Result<RadialOracle<T>> {
    if dim == 0 || !(dof > T::zero()) {
        return Err(Error::Config(format!("need d >= 1 and nu > 0, got d = {dim}, nu = {dof}")));
    }
    Ok(RadialOracle {
        kind: Kind::StudentT { dim, dof },
    })
}

fn student_map<T: Real>(dim: usize, dof: T, r: T) -> T {
    let d = T::from_usize_lossy(dim);
    let x = r * r;
    let p = chi_squared_cdf(dim, x).unwrap_or(T::nan());
    let f = if p <= T::c(0.5) {
        f_quantile(d, dof, p)
    } else {
        f_quantile_upper(d, dof, chi_squared_sf(dim, x).unwrap_or(T::nan()))
    };
    (d * f.unwrap_or(T::nan())).sqrt()
}

/// CDF-matching oracle for a target radial density `φ` given through `log φ`.
pub fn cdf_match_radial_oracle<T: Real, F>(log_phi: F, dim: usize, grid: RadialGrid) -> Result<RadialOracle<T>>
where
    F: Fn(T) -> T + Send + Sync + 'static,
{
    if dim == 0 || grid.n_points < 4 {
        return Err(Error::Config("need d >= 1 and at least 4 grid points".into()));
    }
    let log_phi: std::sync::Arc<dyn Fn(T) -> T + Send + Sync> = std::sync::Arc::new(log_phi);
    let mut r_max = match grid.r_max {
        Some(r) if r > 0.0 => T::c(r),
        Some(r) => return Err(Error::Config(format!("grid radius {r} must be positive"))),
        None => T::c(4.0 * ((dim as f64).sqrt() + 1.0)),
    };
    let mut attempts = 0;
    loop {
        match Table::build(log_phi.clone(), dim, r_max, grid.n_points) {
            Ok(t) => return Ok(RadialOracle { kind: Kind::Table(t) }),
            Err(Error::Coverage { .. }) if grid.r_max.is_none() && attempts < 12 => {
                r_max = r_max * T::c(2.0);
                attempts += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

impl<T: Real> Table<T> {
    fn build(
        log_phi: std::sync::Arc<dyn Fn(T) -> T + Send + Sync>,
        dim: usize,
        r_max: T,
        n: usize,
    ) -> Result<Self> {
        let cfg = QuadConfig::for_type::<T>();
        let radii: Vec<T> = (0..n)
            .map(|i| r_max * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1))
            .collect();
        let log_shift = radii[1..]
            .iter()
            .map(|&r| log_phi(r))
            .filter(|v| v.is_finite())
            .fold(T::neg_infinity(), T::max);
        if !log_shift.is_finite() {
            return Err(Error::Numerical("radial density vanishes on the whole grid".into()));
        }
        let phi = shifted(&log_phi, log_shift);
        let mut pieces = Vec::with_capacity(n - 1);
        for w in radii.windows(2) {
            pieces.push(integrate(&phi, w[0], w[1], cfg)?.value);
        }
        let tail = integrate_to_infinity(&phi, r_max, cfg)?.value;
        drop(phi);
        let mut cum = vec![T::zero(); n];
        for i in 0..n - 1 {
            cum[i + 1] = cum[i] + pieces[i];
        }
        let mut rcum = vec![tail; n];
        for i in (0..n - 1).rev() {
            rcum[i] = rcum[i + 1] + pieces[i];
        }
        let inside = cum[n - 1];
        let total = inside + tail;
        let captured = (inside / total).as_f64();
        if !(captured >= REQUIRED_COVERAGE) {
            return Err(Error::Coverage {
                captured,
                required: REQUIRED_COVERAGE,
            });
        }
        let cdf: Vec<T> = cum.iter().map(|&c| c / total).collect();
        let sf: Vec<T> = rcum.iter().map(|&c| c / total).collect();
        let half = T::c(0.5);

        let mut lx: Vec<T> = Vec::new();
        let mut ly: Vec<T> = Vec::new();
        for i in 1..n {
            let x = cdf[i].ln();
            if x.is_finite() && lx.last().is_none_or(|&last| x > last) {
                lx.push(x);
                ly.push(radii[i].ln());
            }
            if cdf[i] > half && lx.len() >= 2 {
                break;
            }
        }
        let mut ux: Vec<T> = Vec::new();
        let mut uy: Vec<T> = Vec::new();
        let first_upper = (0..n).rposition(|i| sf[i] >= half).unwrap_or(0);
        for i in first_upper..n {
            let x = -sf[i].ln();
            if x.is_finite() && ux.last().is_none_or(|&last| x > last) {
                ux.push(x);
                uy.push(radii[i]);
            }
        }
        if lx.len() < 2 || ux.len() < 2 {
            return Err(Error::Numerical("radial grid too coarse to resolve the target CDF".into()));
        }
        Ok(Table {
            dim,
            radii,
            cdf,
            sf,
            lower: Pchip::new(lx, ly),
            upper: Pchip::new(ux, uy),
            log_phi,
            log_shift,
            total,
        })
    }

    fn eval(&self, r: T) -> T {
        let p = chi_squared_cdf(self.dim, r * r).unwrap_or(T::nan());
        // off the table, fall back to root finding on the quadrature
        if p <= T::c(0.5) {
            let x = p.ln();
            if x < self.lower.x[0] {
                return self.eval_exact(r).unwrap_or_else(|_| self.lower.eval_extrapolated(x).exp());
            }
            self.lower.eval(x).exp()
        } else {
            let x = -chi_squared_sf(self.dim, r * r).unwrap_or(T::nan()).ln();
            if x > *self.upper.x.last().unwrap() {
                return self.eval_exact(r).unwrap_or_else(|_| self.upper.eval_extrapolated(x));
            }
            self.upper.eval(x)
        }
    }

    fn spacing(&self) -> T {
        *self.radii.last().unwrap() / T::from_usize_lossy(self.radii.len() - 1)
    }

    fn phi(&self) -> impl Fn(T) -> T + '_ {
        shifted(&self.log_phi, self.log_shift)
    }

    fn cdf_at(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        let r_max = *self.radii.last().unwrap();
        if s >= r_max {
            return T::one() - self.sf_at(s);
        }
        let i = (s / self.spacing())
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(self.radii.len() - 2);
        let piece = integrate(self.phi(), self.radii[i], s, QuadConfig::for_type::<T>())
            .map(|q| q.value)
            .unwrap_or(T::nan());
        self.cdf[i] + piece / self.total
    }

    fn sf_at(&self, s: T) -> T {
        if s <= T::zero() {
            return T::one();
        }
        let cfg = QuadConfig::for_type::<T>();
        let r_max = *self.radii.last().unwrap();
        if s >= r_max {
            return integrate_to_infinity(self.phi(), s, cfg)
                .map(|q| q.value / self.total)
                .unwrap_or(T::nan());
        }
        let i = ((s / self.spacing()).floor().to_usize().unwrap_or(0) + 1).min(self.radii.len() - 1);
        let piece = integrate(self.phi(), s, self.radii[i], cfg)
            .map(|q| q.value)
            .unwrap_or(T::nan());
        self.sf[i] + piece / self.total
    }

    fn eval_exact(&self, r: T) -> Result<T> {
        let p = chi_squared_cdf(self.dim, r * r)?;
        let lower = p <= T::c(0.5);
        let q = if lower { p } else { chi_squared_sf(self.dim, r * r)? };
        // `below(s)` is true while `s` is left of the root
        let below = |s: T| if lower { self.cdf_at(s) < q } else { self.sf_at(s) > q };
        let mut lo = T::zero();
        let mut hi = *self.radii.last().unwrap();
        let mut expansions = 0;
        while below(hi) {
            lo = hi;
            hi = hi * T::c(2.0);
            expansions += 1;
            if expansions > 60 {
                return Err(Error::NonConvergence {
                    function: "eval_by_root_finding",
                    iterations: expansions,
                    detail: format!("no bracket for chi probability {q}"),
                });
            }
        }
        for _ in 0..200 {
            let mid = (lo + hi) * T::c(0.5);
            if below(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * hi {
                break;
            }
        }
        Ok((lo + hi) * T::c(0.5))
    }
}

fn shifted<T: Real>(log_phi: &std::sync::Arc<dyn Fn(T) -> T + Send + Sync>, log_shift: T) -> impl Fn(T) -> T + '_ {
    move |r: T| {
        if r <= T::zero() {
            return T::zero();
        }
        let v = (log_phi(r) - log_shift).exp();
        if v.is_finite() {
            v
        } else {
            T::zero()
        }
    }
}

/// Oracle for an isotropic target spec: closed form for Gaussian and
/// Student-t, CDF matching for the rest.
pub fn oracle_for_spec<T: Real>(spec: &TargetSpec<T>, grid: RadialGrid) -> Result<RadialOracle<T>> {
    if !spec.is_isotropic() {
        return Err(Error::Unsupported("radial oracles need an isotropic target".into()));
    }
    match spec.family {
        Family::Gaussian => gaussian_radial_oracle(T::one()),
        Family::StudentT => {
            spec.validate()?;
            student_t_radial_oracle(spec.dimension, spec.dof.unwrap())
        }
        Family::Funnel => Err(Error::Unsupported("the funnel is not radially symmetric".into())),
        _ => {
            let model = build_target(spec)?;
            let dim = model.dim();
            cdf_match_radial_oracle(
                move |r: T| model.radial_log_density(r).unwrap_or(T::neg_infinity()),
                dim,
                grid,
            )
        }
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone)]
pub struct Pchip<T> {
    x: Vec<T>,
    y: Vec<T>,
    slope: Vec<T>,
}

impl<T: Real> Pchip<T> {
    /// `x` strictly increasing, at least two nodes.
    pub fn new(x: Vec<T>, y: Vec<T>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len());
        let n = x.len();
        let h: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<T> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut slope = vec![T::zero(); n];
        if n == 2 {
            slope[0] = del[0];
            slope[1] = del[0];
        } else {
            for k in 1..n - 1 {
                if del[k - 1] * del[k] > T::zero() {
                    let w1 = T::c(2.0) * h[k] + h[k - 1];
                    let w2 = h[k] + T::c(2.0) * h[k - 1];
                    slope[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
                }
            }
            slope[0] = edge_slope(h[0], h[1], del[0], del[1]);
            slope[n - 1] = edge_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Pchip { x, y, slope }
    }

    pub fn eval(&self, t: T) -> T {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let two = T::c(2.0);
        let three = T::c(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.slope[k] + h01 * self.y[k + 1] + h11 * h * self.slope[k + 1]
    }

    /// As [`Pchip::eval`], but continued linearly past either end with the
    /// secant slope of the outermost interval.
    pub fn eval_extrapolated(&self, t: T) -> T {
        let n = self.x.len();
        if t < self.x[0] {
            let s = (self.y[1] - self.y[0]) / (self.x[1] - self.x[0]);
            return self.y[0] + s * (t - self.x[0]);
        }
        if t > self.x[n - 1] {
            let s = (self.y[n - 1] - self.y[n - 2]) / (self.x[n - 1] - self.x[n - 2]);
            return self.y[n - 1] + s * (t - self.x[n - 1]);
        }
        self.eval(t)
    }
}

fn edge_slope<T: Real>(h0: T, h1: T, d0: T, d1: T) -> T {
    let d = ((T::c(2.0) * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= T::zero() {
        T::zero()
    } else if d0 * d1 <= T::zero() && d.abs() > (T::c(3.0) * d0).abs() {
        T::c(3.0) * d0
    } else {
        d
    }
}

/// Spherical average `V̄(r) = mean_k V(r θ_k)` over a fixed set of uniform directions.
#[derive(Debug, Clone)]
pub struct SphericalAverage<'a, T: Real> {
    target: &'a dyn Target<T>,
    directions: Vec<Vec<T>>,
}

impl<T: Real> SphericalAverage<'_, T> {
    pub fn eval(&self, r: T) -> T {
        sphere_mean(self.target, &self.directions, r)
    }

    /// Standard error of the sphere average at `r` (zero for isotropic targets).
    pub fn std_error(&self, r: T) -> T {
        if self.target.radial_potential(r).is_some() {
            return T::zero();
        }
        let vals: Vec<f64> = self
            .directions
            .iter()
            .map(|dir| {
                let x: Vec<T> = dir.iter().map(|&b| r * b).collect();
                self.target.potential(&x).as_f64()
            })
            .collect();
        let n = vals.len() as f64;
        let mu = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
        T::c((var / n).sqrt())
    }

    /// `(d - 1) log r - V̄(r)`: log-density of the radius under `exp(-V̄(‖x‖))`.
    pub fn radial_log_density(&self, r: T) -> T {
        T::from_usize_lossy(self.target.dim() - 1) * r.ln() - self.eval(r)
    }
}

fn sphere_mean<T: Real>(target: &dyn Target<T>, directions: &[Vec<T>], r: T) -> T {
    if let Some(v) = target.radial_potential(r) {
        return v;
    }
    let mut x = vec![T::zero(); target.dim()];
    let mut total = T::zero();
    for dir in directions {
        x.iter_mut().zip(dir).for_each(|(a, &b)| *a = r * b);
        total = total + target.potential(&x);
    }
    total / T::from_usize_lossy(directions.len())
}

/// CDF-matching oracle onto the radial law of `exp(-V̄(‖x‖))`, where `V̄` is
/// the spherical average of the target potential over `n_sphere` directions.
pub fn spherical_average_oracle<T: Real>(
    target: TargetModel<T>,
    n_sphere: usize,
    rng: &mut dyn RngCore,
    grid: RadialGrid,
) -> Result<RadialOracle<T>> {
    let directions = spherical_average_potential(target.as_ref(), n_sphere, rng)?.directions;
    let dim = target.dim();
    let dm1 = T::from_usize_lossy(dim - 1);
    cdf_match_radial_oracle(
        move |r: T| dm1 * r.ln() - sphere_mean(target.as_ref(), &directions, r),
        dim,
        grid,
    )
}

pub fn spherical_average_potential<'a, T: Real>(
    target: &'a dyn Target<T>,
    n_sphere: usize,
    rng: &mut dyn RngCore,
) -> Result<SphericalAverage<'a, T>> {
    if n_sphere < 100 {
        return Err(Error::Config(format!("need at least 100 sphere points, got {n_sphere}")));
    }
    let d = target.dim();
    let directions = (0..n_sphere)
        .map(|_| loop {
            let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nz > 0.0 {
                break z.into_iter().map(|v| T::c(v / nz)).collect();
            }
        })
        .collect();
    Ok(SphericalAverage { target, directions })
}
