//! Projected stochastic gradient descent on the radial weights.
//!
//! The objective is `F(λ) = E[V(T_λ(X))] - E[log det DT_λ(X)]` with
//! `X ~ N(0, I_d)`. Each step moves `λ ← Proj_{≥0, Q}(λ - h Q⁻¹ ∇F)`.
//! The potential term is estimated from a Gaussian batch; the log-det term is
//! either integrated against the chi law cell by cell (default) or sampled.

use std::time::Instant;

use rand::{Rng, RngCore};
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{Dictionary, Weights};
use crate::error::{Error, Result};
use crate::gram::{interval_masses, GramMatrix};
use crate::projection::project_nonneg_q;
use crate::quad::{integrate, integrate_to_infinity, QuadConfig};
use crate::rng::{stage_rng, STREAM_LOGDET, STREAM_POTENTIAL};
use crate::scalar::{dot, norm, Real};
use crate::specfun::ln_gamma;
use crate::targets::Target;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogdetMode {
    #[default]
    Semianalytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMode {
    #[default]
    MonteCarlo,
    /// Deterministic radial quadrature; isotropic targets only.
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub logdet_mode: LogdetMode,
    pub potential_mode: PotentialMode,
    /// Log every `trace_every` iterations (the first and last are always logged).
    pub trace_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_size: 7e-3,
            iterations: 10_000,
            batch_size: 100,
            seed: 0,
            logdet_mode: LogdetMode::Semianalytic,
            potential_mode: PotentialMode::MonteCarlo,
            trace_every: 100,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config(format!("step size {} must be positive", self.step_size)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<T> {
    pub iteration: usize,
    pub weights: Vec<T>,
    pub objective: T,
    pub map_error: Option<T>,
    pub wallclock_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterateTrace<T> {
    pub records: Vec<TraceRecord<T>>,
}

impl<T: Real> IterateTrace<T> {
    pub fn last(&self) -> Option<&TraceRecord<T>> {
        self.records.last()
    }

    /// CSV with columns `iter,objective,map_error` and optionally `wallclock_ms`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, wallclock: bool) -> std::io::Result<()> {
        write!(w, "iter,objective,map_error")?;
        if wallclock {
            write!(w, ",wallclock_ms")?;
        }
        writeln!(w)?;
        for r in &self.records {
            let err = r.map_error.map(|e| format!("{:e}", e.as_f64())).unwrap_or_default();
            write!(w, "{},{:e},{}", r.iteration, r.objective.as_f64(), err)?;
            if wallclock {
                write!(w, ",{:.3}", r.wallclock_ms)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Per-coordinate Monte Carlo mean with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloVector<T> {
    pub mean: Vec<T>,
    pub std_error: Vec<T>,
}

/// Density of the chi law with the normalizer computed once.
#[derive(Debug, Clone, Copy)]
struct ChiLaw<T> {
    dm1: T,
    log_norm: T,
}

impl<T: Real> ChiLaw<T> {
    fn new(dim: usize) -> Self {
        let d = T::from_usize_lossy(dim);
        let half = T::c(0.5);
        ChiLaw {
            dm1: d - T::one(),
            log_norm: (d * half - T::one()) * T::c(std::f64::consts::LN_2) + ln_gamma(d * half),
        }
    }

    fn pdf(&self, r: T) -> T {
        if r <= T::zero() {
            return T::zero();
        }
        let lr = if self.dm1 == T::zero() { T::zero() } else { self.dm1 * r.ln() };
        (lr - r * r * T::c(0.5) - self.log_norm).exp()
    }
}

fn quad_cfg<T: Real>() -> QuadConfig {
    QuadConfig::with_tol(T::QUAD_TOL * 1e-2, T::QUAD_TOL * 10.0)
}

/// `∫ f(r) dρ̃(r)` over partition cell `ℓ` (`ℓ = J + 1` is the unbounded plateau).
fn cell_integral<T: Real>(dict: &Dictionary<T>, chi: &ChiLaw<T>, cell: usize, f: impl Fn(T) -> T) -> Result<T> {
    let cfg = quad_cfg::<T>();
    let res = if cell < dict.len() {
        integrate(|r| f(r) * chi.pdf(r), dict.ramp_start(cell), dict.ramp_end(cell), cfg)?
    } else {
        integrate_to_infinity(|r| f(r) * chi.pdf(r), dict.ramp_end(dict.len() - 1), cfg)?
    };
    Ok(res.value)
}

/// Gradient in `λ` of `∫ H(g_λ(r)) dρ̃` given `h = H'`:
/// component `j` is `∫_{I_j} Ψ_j h(g) dρ̃ + Σ_{ℓ>j} ∫_{I_ℓ} h(g) dρ̃`.
fn ramp_weighted_gradient<T: Real>(
    dict: &Dictionary<T>,
    weights: &Weights<T>,
    h: impl Fn(T, T) -> T,
) -> Result<Vec<T>> {
    let chi = ChiLaw::new(dict.dim());
    let n = dict.len();
    let g = |r: T| dict.radial_value(weights, r);
    let mut full = Vec::with_capacity(n + 1);
    let mut ramp = Vec::with_capacity(n);
    for cell in 0..=n {
        full.push(cell_integral(dict, &chi, cell, |r| h(r, g(r)))?);
        if cell < n {
            let (a, w) = (dict.ramp_start(cell), dict.ramp_width(cell));
            ramp.push(cell_integral(dict, &chi, cell, |r| (r - a) / w * h(r, g(r)))?);
        }
    }
    let mut out = vec![T::zero(); n];
    let mut suffix = full[n];
    for j in (0..n).rev() {
        out[j] = ramp[j] + suffix;
        suffix = suffix + full[j];
    }
    Ok(out)
}

/// `∇_λ E[log det DT_λ(X)]`, integrated cell by cell against the chi law.
///
/// The `Ψ'` part is closed form, `P(‖X‖ ∈ I_j) / (αδ_j + λ_j)`; the `(d - 1) Ψ_j / g`
/// part is integrated by adaptive quadrature on each cell.
pub fn logdet_grad_semianalytic<T: Real>(dict: &Dictionary<T>, weights: &Weights<T>) -> Result<Vec<T>> {
    check_len(dict, weights)?;
    let masses = interval_masses(dict)?;
    let lam = weights.as_slice();
    let alpha = dict.alpha();
    let mut out: Vec<T> = (0..dict.len())
        .map(|j| masses[j] / (alpha * dict.ramp_width(j) + lam[j]))
        .collect();
    if dict.dim() > 1 {
        let dm1 = T::from_usize_lossy(dict.dim() - 1);
        let tangential = ramp_weighted_gradient(dict, weights, |_, g| T::one() / g)?;
        for (o, t) in out.iter_mut().zip(tangential) {
            *o = *o + dm1 * t;
        }
    }
    Ok(out)
}

/// `E[log det DT_λ(X)]` by quadrature.
pub fn logdet_objective<T: Real>(dict: &Dictionary<T>, weights: &Weights<T>) -> Result<T> {
    check_len(dict, weights)?;
    let masses = interval_masses(dict)?;
    let lam = weights.as_slice();
    let alpha = dict.alpha();
    let n = dict.len();
    let mut total = masses[n] * alpha.ln();
    for j in 0..n {
        total = total + masses[j] * (alpha + lam[j] / dict.ramp_width(j)).ln();
    }
    if dict.dim() > 1 {
        let chi = ChiLaw::new(dict.dim());
        let dm1 = T::from_usize_lossy(dict.dim() - 1);
        for cell in 0..=n {
            let v = cell_integral(dict, &chi, cell, |r| (dict.radial_value(weights, r) / r).ln())?;
            total = total + dm1 * v;
        }
    }
    Ok(total)
}

/// Monte Carlo estimate of the log-det gradient from `n` chi radii.
pub fn logdet_grad_mc<T: Real, R: Rng + ?Sized>(
    dict: &Dictionary<T>,
    weights: &Weights<T>,
    n: usize,
    rng: &mut R,
) -> Result<MonteCarloVector<T>> {
    check_len(dict, weights)?;
    if n == 0 {
        return Err(Error::Config("Monte Carlo batch must be nonempty".into()));
    }
    let m = dict.len();
    let chi2 = ChiSquared::new(dict.dim() as f64).expect("positive dof");
    let dm1 = (dict.dim() - 1) as f64;
    let mut sum = vec![0.0f64; m];
    let mut sumsq = vec![0.0f64; m];
    let mut psi = vec![T::zero(); m];
    for _ in 0..n {
        let r = T::c(chi2.sample(rng).sqrt());
        dict.eval_basis_into(r, &mut psi);
        let g = dict.radial_value(weights, r).as_f64();
        let gp = dict.radial_deriv(weights, r).as_f64();
        let l = dict.interval_of(r);
        for j in 0..m {
            let mut v = dm1 * psi[j].as_f64() / g;
            if j == l {
                v += 1.0 / (dict.ramp_width(j).as_f64() * gp);
            }
            sum[j] += v;
            sumsq[j] += v * v;
        }
    }
    let nf = n as f64;
    let mean: Vec<T> = sum.iter().map(|s| T::c(s / nf)).collect();
    let std_error = sum
        .iter()
        .zip(&sumsq)
        .map(|(s, ss)| {
            let mu = s / nf;
            let var = if n > 1 { ((ss / nf - mu * mu) * nf / (nf - 1.0)).max(0.0) } else { 0.0 };
            T::c((var / nf).sqrt())
        })
        .collect();
    Ok(MonteCarloVector { mean, std_error })
}

/// `n` i.i.d. draws from `N(0, I_d)`.
pub fn gaussian_batch<T: Real, R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Vec<Vec<T>> {
    (0..n)
        .map(|_| (0..dim).map(|_| T::c(rng.sample(StandardNormal))).collect())
        .collect()
}

/// `(1/n) Σ V(T_λ(x_i))` over a fixed batch.
pub fn potential_objective_on<T: Real>(
    target: &dyn Target<T>,
    dict: &Dictionary<T>,
    weights: &Weights<T>,
    batch: &[Vec<T>],
) -> T {
    let total: T = batch
        .iter()
        .map(|x| target.potential(&dict.apply_map(weights, x)))
        .sum();
    total / T::from_usize_lossy(batch.len())
}

/// `(1/n) Σ Ψ(‖x_i‖) ⟨x_i/‖x_i‖, ∇V(T_λ(x_i))⟩` over a fixed batch.
pub fn potential_grad_on<T: Real>(
    target: &dyn Target<T>,
    dict: &Dictionary<T>,
    weights: &Weights<T>,
    batch: &[Vec<T>],
) -> Vec<T> {
    let m = dict.len();
    let mut acc = vec![T::zero(); m];
    let mut psi = vec![T::zero(); m];
    let mut y = Vec::new();
    for x in batch {
        let r = norm(x);
        if r == T::zero() {
            continue;
        }
        let g = dict.radial_value(weights, r);
        y.clear();
        y.extend(x.iter().map(|&v| v * g / r));
        let grad = target.gradient(&y);
        let s = dot(x, &grad) / r;
        dict.eval_basis_into(r, &mut psi);
        for (a, &p) in acc.iter_mut().zip(&psi) {
            *a = *a + p * s;
        }
    }
    let nf = T::from_usize_lossy(batch.len());
    acc.into_iter().map(|a| a / nf).collect()
}

/// Unbiased estimate of `∇_λ E[V(T_λ(X))]` from `n` fresh Gaussian draws.
pub fn potential_grad_estimate<T: Real, R: Rng + ?Sized>(
    target: &dyn Target<T>,
    dict: &Dictionary<T>,
    weights: &Weights<T>,
    n: usize,
    rng: &mut R,
) -> Vec<T> {
    let batch = gaussian_batch(dict.dim(), n, rng);
    potential_grad_on(target, dict, weights, &batch)
}

fn radial_profile_of<T: Real>(target: &dyn Target<T>) -> Result<()> {
    if target.radial_potential(T::one()).is_none() {
        return Err(Error::Unsupported(format!(
            "radial quadrature needs an isotropic target, got {}",
            target.name()
        )));
    }
    Ok(())
}

/// `∫ v(g_λ(r)) dρ̃(r)` for an isotropic target `V(x) = v(‖x‖)`.
pub fn potential_objective_radial<T: Real>(
    target: &dyn Target<T>,
    dict: &Dictionary<T>,
    weights: &Weights<T>,
) -> Result<T> {
    radial_profile_of(target)?;
    check_len(dict, weights)?;
    let chi = ChiLaw::new(dict.dim());
    let mut total = T::zero();
    for cell in 0..=dict.len() {
        total = total
            + cell_integral(dict, &chi, cell, |r| {
                target.radial_potential(dict.radial_value(weights, r)).unwrap()
            })?;
    }
    Ok(total)
}

/// Exact (`n → ∞`) potential gradient for an isotropic target.
pub fn potential_grad_radial<T: Real>(
    target: &dyn Target<T>,
    dict: &Dictionary<T>,
    weights: &Weights<T>,
) -> Result<Vec<T>> {
    radial_profile_of(target)?;
    check_len(dict, weights)?;
    ramp_weighted_gradient(dict, weights, |_, g| target.radial_potential_deriv(g).unwrap())
}

/// `F(λ) = ∫ v(g_λ) dρ̃ - ∫ log det DT_λ dρ̃` by one-dimensional quadrature.
pub fn objective_eval_radial<T: Real>(
    target: &dyn Target<T>,
    dict: &Dictionary<T>,
    weights: &Weights<T>,
) -> Result<T> {
    Ok(potential_objective_radial(target, dict, weights)? - logdet_objective(dict, weights)?)
}

/// `λ' = Proj_{≥0, Q}(λ - h Q⁻¹ grad)`.
pub fn radvi_step<T: Real>(weights: &Weights<T>, grad: &[T], step: T, gram: &GramMatrix<T>) -> Result<Weights<T>> {
    if grad.len() != weights.len() {
        return Err(Error::Dimension {
            expected: weights.len(),
            got: grad.len(),
        });
    }
    let dir = gram.solve(grad);
    let y: Vec<T> = weights
        .as_slice()
        .iter()
        .zip(dir)
        .map(|(&l, d)| l - step * d)
        .collect();
    project_nonneg_q(gram, &y)
}

/// Final weights plus the logged trajectory.
#[derive(Debug, Clone)]
pub struct RunOutput<T: Real> {
    pub weights: Weights<T>,
    pub trace: IterateTrace<T>,
}

pub fn radvi_run<T: Real>(
    target: &dyn Target<T>,
    dict: &Dictionary<T>,
    gram: &GramMatrix<T>,
    initial: &Weights<T>,
    config: &OptimizerConfig,
) -> Result<RunOutput<T>> {
    radvi_run_with_monitor(target, dict, gram, initial, config, None)
}

/// As [`radvi_run`], evaluating `monitor` (typically a map error against an
/// oracle) at every logged iterate.
pub fn radvi_run_with_monitor<T: Real>(
    target: &dyn Target<T>,
    dict: &Dictionary<T>,
    gram: &GramMatrix<T>,
    initial: &Weights<T>,
    config: &OptimizerConfig,
    monitor: Option<&dyn Fn(&Weights<T>) -> T>,
) -> Result<RunOutput<T>> {
    config.validate()?;
    check_len(dict, initial)?;
    if target.dim() != dict.dim() {
        return Err(Error::Dimension {
            expected: dict.dim(),
            got: target.dim(),
        });
    }
    if config.potential_mode == PotentialMode::Quadrature {
        radial_profile_of(target)?;
    }
    let mut pot_rng = stage_rng(config.seed, STREAM_POTENTIAL);
    let mut ld_rng = stage_rng(config.seed, STREAM_LOGDET);
    let step = T::c(config.step_size);
    let k_total = config.iterations;
    let logged = |k: usize| k == 0 || k == k_total || (config.trace_every > 0 && k % config.trace_every == 0);

    let start = Instant::now();
    let mut trace = IterateTrace { records: Vec::new() };
    let mut lam = initial.clone();
    let mut record = |k: usize, lam: &Weights<T>, batch: Option<&[Vec<T>]>| -> Result<()> {
        let pot = match (config.potential_mode, batch) {
            (PotentialMode::Quadrature, _) => potential_objective_radial(target, dict, lam)?,
            (PotentialMode::MonteCarlo, Some(b)) => potential_objective_on(target, dict, lam, b),
            (PotentialMode::MonteCarlo, None) => unreachable!(),
        };
        let objective = pot - logdet_objective(dict, lam)?;
        trace.records.push(TraceRecord {
            iteration: k,
            weights: lam.as_slice().to_vec(),
            objective,
            map_error: monitor.map(|m| m(lam)),
            wallclock_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    };

    for k in 0..k_total {
        let (pot_grad, batch) = match config.potential_mode {
            PotentialMode::MonteCarlo => {
                let b = gaussian_batch(dict.dim(), config.batch_size, &mut pot_rng);
                (potential_grad_on(target, dict, &lam, &b), Some(b))
            }
            PotentialMode::Quadrature => (potential_grad_radial(target, dict, &lam)?, None),
        };
        if logged(k) {
            record(k, &lam, batch.as_deref())?;
        }
        let ld_grad = match config.logdet_mode {
            LogdetMode::Semianalytic => logdet_grad_semianalytic(dict, &lam)?,
            LogdetMode::MonteCarlo => logdet_grad_mc(dict, &lam, config.batch_size, &mut ld_rng)?.mean,
        };
        let grad: Vec<T> = pot_grad.iter().zip(&ld_grad).map(|(&a, &b)| a - b).collect();
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                iteration: k,
                lambda: lam.to_f64(),
            });
        }
        lam = radvi_step(&lam, &grad, step, gram)?;
    }
    let final_batch = match config.potential_mode {
        PotentialMode::MonteCarlo => Some(gaussian_batch(dict.dim(), config.batch_size, &mut pot_rng)),
        PotentialMode::Quadrature => None,
    };
    record(k_total, &lam, final_batch.as_deref())?;
    Ok(RunOutput { weights: lam, trace })
}

fn check_len<T: Real>(dict: &Dictionary<T>, weights: &Weights<T>) -> Result<()> {
    if weights.len() != dict.len() {
        return Err(Error::Dimension {
            expected: dict.len(),
            got: weights.len(),
        });
    }
    Ok(())
}

/// Draws a uniformly random weight vector in `[0, scale]^{J+1}` (test and validation helper).
pub fn random_weights<T: Real>(len: usize, scale: f64, rng: &mut dyn RngCore) -> Weights<T> {
    Weights::from_projection((0..len).map(|_| T::c(rng.random::<f64>() * scale)).collect())
}
