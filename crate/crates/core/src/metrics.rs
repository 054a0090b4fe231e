//! Evaluation metrics: map error in `L²(ρ)`, exact empirical `W₂²`, radial
//! quantile profiles, Kolmogorov–Smirnov statistics and self-normalized
//! importance sampling.

use rand::{Rng, RngCore};
use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use crate::basis::{Dictionary, Weights};
use crate::error::{Error, Result};
use crate::oracles::RadialOracle;
use crate::scalar::{log_sum_exp, norm, Real};
use crate::targets::Target;

/// Largest sample size handled by [`empirical_w2_squared`].
pub const EXACT_W2_CAP: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub standard_error: Option<f64>,
    pub n_samples: usize,
    pub seed: Option<u64>,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: f64, standard_error: Option<f64>, n_samples: usize) -> Self {
        MetricReport {
            name: name.into(),
            value,
            standard_error,
            n_samples,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mu, 0.0);
    }
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
    (mu, (var / n).sqrt())
}

/// `n` draws of `‖X‖`, `X ~ N(0, I_d)`.
pub fn sample_chi_radii<T: Real, R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Vec<T> {
    let chi2 = ChiSquared::new(dim as f64).expect("positive dof");
    (0..n).map(|_| T::c(chi2.sample(rng).sqrt())).collect()
}

/// Monte Carlo `‖T_λ - T*‖²_{L²(ρ)} = E[(g_λ(r) - Ψ*(r))²]`, `r ~ χ_d`.
pub fn map_error_l2<T: Real, R: Rng + ?Sized>(
    dict: &Dictionary<T>,
    weights: &Weights<T>,
    oracle: &RadialOracle<T>,
    n: usize,
    rng: &mut R,
) -> Result<MetricReport> {
    if n == 0 {
        return Err(Error::Config("map error needs at least one sample".into()));
    }
    let errs: Vec<f64> = sample_chi_radii::<T, R>(dict.dim(), n, rng)
        .into_iter()
        .map(|r| {
            let e = dict.radial_value(weights, r) - oracle.eval(r);
            (e * e).as_f64()
        })
        .collect();
    let (mu, se) = mean_and_se(&errs);
    Ok(MetricReport::new("map_error", mu, Some(se), n))
}

/// Same quantity over fixed chi radii (deterministic given the radii).
pub fn map_error_on_radii<T: Real>(
    dict: &Dictionary<T>,
    weights: &Weights<T>,
    oracle: &RadialOracle<T>,
    radii: &[T],
) -> T {
    let total: T = radii
        .iter()
        .map(|&r| {
            let e = dict.radial_value(weights, r) - oracle.eval(r);
            e * e
        })
        .sum();
    total / T::from_usize_lossy(radii.len())
}

/// Exact `(1/n) min_σ Σ ‖x_i - y_σ(i)‖²` by the Hungarian algorithm.
pub fn empirical_w2_squared<T: Real>(x: &[Vec<T>], y: &[Vec<T>]) -> Result<T> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    if n > EXACT_W2_CAP {
        return Err(Error::Size { n, cap: EXACT_W2_CAP });
    }
    if n == 0 {
        return Ok(T::zero());
    }
    let cost: Vec<f64> = x
        .iter()
        .flat_map(|a| {
            y.iter().map(move |b| {
                a.iter()
                    .zip(b)
                    .map(|(&u, &v)| {
                        let d = (u - v).as_f64();
                        d * d
                    })
                    .sum::<f64>()
            })
        })
        .collect();
    let assignment = hungarian(n, &cost);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(T::c(total / n as f64))
}

/// Minimum-cost perfect matching on a dense `n × n` cost matrix (row-major);
/// returns the column assigned to each row.
fn hungarian(n: usize, cost: &[f64]) -> Vec<usize> {
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Squared 1D Wasserstein distance between two equal-size radial samples
/// (sorted coupling).
pub fn radial_w2_squared<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    sort(&mut a);
    sort(&mut b);
    let total: T = a.iter().zip(&b).map(|(&u, &v)| (u - v) * (u - v)).sum();
    Ok(total / T::from_usize_lossy(a.len()))
}

fn sort<T: Real>(v: &mut [T]) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in samples"));
}

/// Linear-interpolated (type 7) quantile of sorted data.
pub fn quantile_sorted<T: Real>(sorted: &[T], q: T) -> T {
    let n = sorted.len();
    let h = T::from_usize_lossy(n - 1) * q.max(T::zero()).min(T::one());
    let lo = h.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - T::from_usize_lossy(lo);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Quantiles of `‖x_i‖` at each level of `grid`.
pub fn radial_quantile_profile<T: Real>(samples: &[Vec<T>], grid: &[T]) -> Result<Vec<(T, T)>> {
    if samples.len() < 100 {
        return Err(Error::Config(format!(
            "radial profile needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    let mut radii: Vec<T> = samples.iter().map(|x| norm(x)).collect();
    sort(&mut radii);
    Ok(grid.iter().map(|&q| (q, quantile_sorted(&radii, q))).collect())
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample<T: Real>(a: &[T], b: &[T]) -> T {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    sort(&mut a);
    sort(&mut b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    T::c(d)
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_one_sample<T: Real>(samples: &[T], cdf: impl Fn(T) -> T) -> T {
    let mut s = samples.to_vec();
    sort(&mut s);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x).as_f64();
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    T::c(d)
}

/// Self-normalized importance sampling summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnisReport {
    pub snis: MetricReport,
    pub plug_in: MetricReport,
    pub effective_sample_size: f64,
}

/// SNIS estimate of `E_π[f]` with proposal draws `Y_i` and
/// `log w_i = -V(Y_i) - log q(Y_i)`; also reports the plug-in mean and the ESS.
pub fn snis_estimate<T: Real>(
    f: impl Fn(&[T]) -> T,
    target: &dyn Target<T>,
    proposal_log_density: impl Fn(&[T]) -> T,
    mut proposal_sampler: impl FnMut(&mut dyn RngCore) -> Vec<T>,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<SnisReport> {
    if n == 0 {
        return Err(Error::Config("SNIS needs at least one sample".into()));
    }
    let mut log_w = Vec::with_capacity(n);
    let mut vals = Vec::with_capacity(n);
    for _ in 0..n {
        let y = proposal_sampler(rng);
        log_w.push((-target.potential(&y) - proposal_log_density(&y)).as_f64());
        vals.push(f(&y).as_f64());
    }
    snis_from_log_weights(&log_w, &vals)
}

/// SNIS from precomputed log-weights and function values.
pub fn snis_from_log_weights(log_w: &[f64], vals: &[f64]) -> Result<SnisReport> {
    let n = vals.len();
    let finite: Vec<f64> = log_w.iter().map(|&l| if l.is_nan() { f64::NEG_INFINITY } else { l }).collect();
    let lse = log_sum_exp(&finite);
    if !lse.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let w: Vec<f64> = finite.iter().map(|&l| (l - lse).exp()).collect();
    let est: f64 = w.iter().zip(vals).map(|(a, b)| a * b).sum();
    let se = w
        .iter()
        .zip(vals)
        .map(|(a, b)| (a * (b - est)).powi(2))
        .sum::<f64>()
        .sqrt();
    let ess = 1.0 / w.iter().map(|a| a * a).sum::<f64>();
    let (plug, plug_se) = mean_and_se(vals);
    Ok(SnisReport {
        snis: MetricReport::new("snis", est, Some(se), n),
        plug_in: MetricReport::new("plug_in", plug, Some(plug_se), n),
        effective_sample_size: ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hungarian_small_instance() {
        // rows prefer distinct columns only through the global optimum
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(3, &cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn shift_gives_squared_norm() {
        let x = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]];
        let y: Vec<Vec<f64>> = x.iter().map(|p| vec![p[0] + 0.3, p[1] - 0.4]).collect();
        assert!((empirical_w2_squared(&x, &y).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(empirical_w2_squared(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&a, &[4.0, 5.0]), 1.0);
    }

    #[test]
    fn constant_function_snis_is_exact() {
        let r = snis_from_log_weights(&[-1.0, -3.0, 0.5], &[2.5, 2.5, 2.5]).unwrap();
        assert!((r.snis.value - 2.5).abs() < 1e-15);
        assert!(snis_from_log_weights(&[f64::NEG_INFINITY; 2], &[1.0, 1.0]).is_err());
    }
}
