//! A single experiment: optional whitening, radVI, metrics and artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use radvi_core::basis::{Dictionary, Weights};
use radvi_core::gram::GramMatrix;
use radvi_core::metrics::{
    map_error_l2, quantile_sorted, radial_w2_squared, sample_chi_radii, snis_from_log_weights, MetricReport,
};
use radvi_core::optimizer::{radvi_run_with_monitor, IterateTrace};
use radvi_core::oracles::{oracle_for_spec, spherical_average_oracle, RadialGrid, RadialOracle};
use radvi_core::rng::{
    stage_rng, STREAM_EVALUATION, STREAM_IMPORTANCE, STREAM_REFERENCE, STREAM_SAMPLES,
};
use radvi_core::scalar::norm;
use radvi_core::specfun::chi_squared_cdf;
use radvi_core::targets::{build_target, sample_target, Family, TargetModel};
use radvi_core::whitening::{
    gaussian_vi, laplace_approx, whiten_target, CompositeMap, WhiteningRecord, WhiteningTransform,
};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{MetricKind, RunConfig, WhiteningMethod};
use crate::error::{CliError, CliResult};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "RADVI_OUTPUT_ROOT";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides every other choice of output directory.
    pub out_dir: Option<PathBuf>,
    /// Write `samples.csv` even when the config does not ask for it.
    pub samples: bool,
    /// Add a `wallclock_ms` column to `trace.csv`.
    pub wallclock: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryInfo {
    pub dim: usize,
    pub cutoff: f64,
    pub mesh: f64,
    pub alpha: f64,
    pub num_ramps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GviInfo {
    pub step_halvings: usize,
    pub final_step_size: f64,
    pub transform: WhiteningRecord,
}

/// Importance-sampling estimates under one proposal, averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalEstimates {
    /// SNIS estimate of the tail probability.
    pub snis: MetricReport,
    /// Fraction of proposal draws in the tail.
    pub plug_in: MetricReport,
    /// Mean effective sample size per trial.
    pub ess: f64,
    /// SNIS estimates of `E[y_c²]` for each requested coordinate.
    pub moments: Vec<MetricReport>,
    pub plug_in_moments: Vec<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnisSummary {
    pub coordinate: usize,
    pub threshold: f64,
    pub trials: usize,
    pub samples_per_trial: usize,
    pub radvi: ProposalEstimates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<ProposalEstimates>,
    /// Exact-sampler estimates, tail probability first, then the moments.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference: Vec<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub dictionary: DictionaryInfo,
    pub lambda: Vec<f64>,
    pub whitening: WhiteningRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gvi: Option<GviInfo>,
    pub metrics: Vec<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snis: Option<SnisSummary>,
    pub final_objective: f64,
    pub wallclock_ms: f64,
}

impl RunSummary {
    pub fn metric(&self, name: &str) -> Option<&MetricReport> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

/// One row of `profile.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub quantile: f64,
    pub truth: Option<f64>,
    pub radvi: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub trace: IterateTrace<f64>,
    pub profile: Option<Vec<ProfileRow>>,
    pub composite: CompositeMap<f64>,
}

/// Runs the experiment without touching the filesystem.
pub fn execute(config: &RunConfig) -> CliResult<RunOutcome> {
    let start = Instant::now();
    let cfg = config.resolve()?;
    let seed = cfg.seed;
    let spec = cfg.target_spec()?;
    let model = build_target(&spec)?;
    let d = model.dim();

    let mut gvi_info = None;
    let mut gvi_transform = None;
    let whitening = match cfg.whitening.method {
        WhiteningMethod::None => WhiteningTransform::identity(d),
        WhiteningMethod::La => laplace_approx(model.as_ref(), &vec![0.0; d], cfg.whitening.tol)?,
        WhiteningMethod::Gvi => {
            let out = gaussian_vi(model.as_ref(), &cfg.whitening.gvi)?;
            gvi_info = Some(GviInfo {
                step_halvings: out.step_halvings,
                final_step_size: out.final_step_size,
                transform: out.transform.to_record(),
            });
            gvi_transform = Some(out.transform.clone());
            out.transform
        }
    };
    let whitened = cfg.whitening.method != WhiteningMethod::None;
    let work: TargetModel<f64> = if whitened { whiten_target(model.clone(), &whitening)? } else { model.clone() };

    let (cutoff, mesh) = cfg.cutoff_and_mesh()?;
    let dict = Dictionary::new(d, cutoff, mesh, cfg.dict.alpha)?;
    let gram = GramMatrix::new(&dict)?;
    let initial = Weights::constant(dict.len(), cfg.dict.lambda0)?;

    let metrics_cfg = &cfg.metrics;
    let n = metrics_cfg.n_samples;
    let wants_oracle = metrics_cfg.wants(MetricKind::MapError) || metrics_cfg.wants(MetricKind::GviBaseline);
    let oracle = if wants_oracle && !whitened && spec.is_isotropic() && spec.family != Family::Funnel {
        Some(oracle_for_spec(&spec, RadialGrid::default())?)
    } else {
        None
    };

    let eval_radii: Vec<f64> = sample_chi_radii(d, n, &mut stage_rng(seed, STREAM_EVALUATION));
    let oracle_at_eval: Option<Vec<f64>> = oracle.as_ref().map(|o| eval_radii.iter().map(|&r| o.eval(r)).collect());
    let monitor = |w: &Weights<f64>| -> f64 {
        let psi = oracle_at_eval.as_ref().expect("monitor only installed with an oracle");
        eval_radii
            .iter()
            .zip(psi)
            .map(|(&r, &p)| (dict.radial_value(w, r) - p).powi(2))
            .sum::<f64>()
            / n as f64
    };
    let monitor_ref: Option<&dyn Fn(&Weights<f64>) -> f64> =
        if oracle_at_eval.is_some() && metrics_cfg.wants(MetricKind::MapError) { Some(&monitor) } else { None };

    let run = radvi_run_with_monitor(work.as_ref(), &dict, &gram, &initial, &cfg.optimizer, monitor_ref)?;
    let weights = run.weights.clone();
    let final_objective = run.trace.last().map(|r| r.objective).unwrap_or(f64::NAN);
    let composite = CompositeMap::new(whitening.clone(), dict.clone(), weights.clone())?;

    let mut metrics = Vec::new();
    if metrics_cfg.wants(MetricKind::MapError) {
        if let Some(o) = &oracle {
            let mut rng = stage_rng(seed, STREAM_EVALUATION);
            metrics.push(map_error_l2(&dict, &weights, o, n, &mut rng)?.with_seed(seed));
        }
    }

    let normals = || -> Vec<Vec<f64>> {
        let mut rng = stage_rng(seed, STREAM_SAMPLES);
        (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    };

    if metrics_cfg.wants(MetricKind::GviBaseline) {
        let gvi = match &gvi_transform {
            Some(t) => t.clone(),
            None => {
                let out = gaussian_vi(model.as_ref(), &cfg.whitening.gvi)?;
                if gvi_info.is_none() {
                    gvi_info = Some(GviInfo {
                        step_halvings: out.step_halvings,
                        final_step_size: out.final_step_size,
                        transform: out.transform.to_record(),
                    });
                }
                out.transform
            }
        };
        gvi_transform = Some(gvi.clone());
        if let Some(o) = &oracle {
            let z = normals();
            let truth: Vec<f64> = z.iter().map(|x| o.eval(norm(x))).collect();
            let gvi_r: Vec<f64> = z.iter().map(|x| norm(&gvi.apply(x))).collect();
            let radvi_r: Vec<f64> = z.iter().map(|x| dict.radial_value(&weights, norm(x))).collect();
            let gvi_w2 = radial_w2_squared(&gvi_r, &truth)?;
            let radvi_w2 = radial_w2_squared(&radvi_r, &truth)?;
            metrics.push(MetricReport::new("gvi_radial_w2", gvi_w2, None, n).with_seed(seed));
            metrics.push(MetricReport::new("radvi_radial_w2", radvi_w2, None, n).with_seed(seed));
            if let Some(me) = metrics.iter().find(|m| m.name == "map_error").map(|m| m.value) {
                metrics.push(MetricReport::new("advantage_ratio", gvi_w2 / me, None, n).with_seed(seed));
            }
        }
    }

    if metrics_cfg.wants(MetricKind::Stationarity) {
        let rms = stationarity_rms(&cfg, &work, &dict, &weights)?;
        metrics.push(MetricReport::new("stationarity_quantile_rms", rms, None, 91).with_seed(seed));
    }

    let baseline = if whitened { Some(whitening.clone()) } else { gvi_transform.clone() };

    let profile = if metrics_cfg.wants(MetricKind::Profile) {
        Some(radial_profile(&cfg, &work, &dict, &weights, baseline.as_ref(), &whitening)?)
    } else {
        None
    };

    let snis = if metrics_cfg.wants(MetricKind::Snis) {
        Some(snis_summary(&cfg, &model, &composite, baseline.as_ref())?)
    } else {
        None
    };

    let summary = RunSummary {
        dictionary: DictionaryInfo {
            dim: d,
            cutoff,
            mesh,
            alpha: cfg.dict.alpha,
            num_ramps: dict.num_interior(),
        },
        lambda: weights.to_f64(),
        whitening: whitening.to_record(),
        gvi: gvi_info,
        metrics,
        snis,
        final_objective,
        wallclock_ms: start.elapsed().as_secs_f64() * 1e3,
        config: cfg,
    };
    Ok(RunOutcome {
        summary,
        trace: run.trace,
        profile,
        composite,
    })
}

/// Chi quantile by bisection on the chi-squared CDF.
pub fn chi_quantile(d: usize, q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, (d as f64).sqrt() + 10.0);
    while chi_squared_cdf(d, hi * hi).unwrap_or(1.0) < q {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_squared_cdf(d, mid * mid).unwrap_or(f64::NAN) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// RMS relative gap between the quantiles of `g_λ(‖X‖)` and those of the
/// radial law of `exp(-V̄(‖x‖))`, over the levels `0.05, 0.06, ..., 0.95`.
fn stationarity_rms(
    cfg: &RunConfig,
    work: &TargetModel<f64>,
    dict: &Dictionary<f64>,
    weights: &Weights<f64>,
) -> CliResult<f64> {
    let d = work.dim();
    let linear_sigma = if cfg.whitening.method == WhiteningMethod::None && cfg.family()? == Family::Gaussian {
        let spec = cfg.target_spec()?;
        let tr = match &spec.shape {
            Some(s) => radvi_core::linalg::Cholesky::new(s)
                .map_err(|_| CliError::Config("shape matrix is not positive definite".into()))?
                .inverse()
                .diag()
                .iter()
                .sum::<f64>(),
            None => d as f64,
        };
        Some((d as f64 / tr).sqrt())
    } else {
        None
    };
    let oracle: Option<RadialOracle<f64>> = match linear_sigma {
        Some(_) => None,
        None => {
            let mut rng = stage_rng(cfg.seed, STREAM_SAMPLES);
            Some(spherical_average_oracle(
                work.clone(),
                cfg.metrics.sphere_points,
                &mut rng,
                RadialGrid::default(),
            )?)
        }
    };
    let mut sq = 0.0;
    let levels: Vec<f64> = (5..=95).map(|i| i as f64 / 100.0).collect();
    for &q in &levels {
        let c = chi_quantile(d, q);
        let truth = match (&oracle, linear_sigma) {
            (_, Some(s)) => s * c,
            (Some(o), None) => o.eval(c),
            (None, None) => unreachable!(),
        };
        let learned = dict.radial_value(weights, c);
        sq += ((learned - truth) / truth).powi(2);
    }
    Ok((sq / levels.len() as f64).sqrt())
}

/// Radial quantiles, in whitened coordinates, of exact target draws, of
/// radVI draws and of the Gaussian baseline.
fn radial_profile(
    cfg: &RunConfig,
    work: &TargetModel<f64>,
    dict: &Dictionary<f64>,
    weights: &Weights<f64>,
    baseline: Option<&WhiteningTransform<f64>>,
    whitening: &WhiteningTransform<f64>,
) -> CliResult<Vec<ProfileRow>> {
    let n = cfg.metrics.n_samples;
    let d = work.dim();
    let levels = cfg.metrics.profile_levels.max(1);
    let mut truth: Option<Vec<f64>> = if work.has_sampler() {
        let mut rng = stage_rng(cfg.seed, STREAM_REFERENCE);
        Some(sample_target(work.as_ref(), n, &mut rng)?.iter().map(|y| norm(y)).collect())
    } else {
        None
    };
    let mut rng = stage_rng(cfg.seed, STREAM_SAMPLES);
    let z: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let mut radvi: Vec<f64> = z.iter().map(|x| dict.radial_value(weights, norm(x))).collect();
    let mut base: Vec<f64> = z
        .iter()
        .map(|x| match baseline {
            Some(b) => norm(&whitening.invert(&b.apply(x))),
            None => norm(x),
        })
        .collect();
    let by = |a: &f64, b: &f64| a.partial_cmp(b).expect("finite radii");
    if let Some(t) = truth.as_mut() {
        t.sort_by(by);
    }
    radvi.sort_by(by);
    base.sort_by(by);
    Ok((1..=levels)
        .map(|i| {
            let q = i as f64 / (levels + 1) as f64;
            ProfileRow {
                quantile: q,
                truth: truth.as_ref().map(|t| quantile_sorted(t, q)),
                radvi: quantile_sorted(&radvi, q),
                baseline: quantile_sorted(&base, q),
            }
        })
        .collect())
}

fn gaussian_log_density(t: &WhiteningTransform<f64>, y: &[f64]) -> f64 {
    let u = t.invert(y);
    let d = u.len() as f64;
    -0.5 * u.iter().map(|v| v * v).sum::<f64>() - 0.5 * d * (2.0 * std::f64::consts::PI).ln() - t.log_abs_det()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mu, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
    (mu, (var / n).sqrt())
}

fn moment_name(c: usize) -> String {
    format!("E[y_{c}^2]")
}

/// SNIS of the tail indicator and of the requested second moments, repeated
/// over `trials` independent batches of `n` proposal draws.
#[allow(clippy::too_many_arguments)]
fn repeated_snis(
    model: &TargetModel<f64>,
    log_q: impl Fn(&[f64]) -> f64,
    mut sample: impl FnMut(&mut dyn RngCore) -> Vec<f64>,
    tail: impl Fn(&[f64]) -> f64,
    coords: &[usize],
    n: usize,
    trials: usize,
    seed: u64,
) -> CliResult<ProposalEstimates> {
    let mut rng = stage_rng(seed, STREAM_IMPORTANCE);
    let k = coords.len();
    let mut tail_est = Vec::with_capacity(trials);
    let mut tail_plug = Vec::with_capacity(trials);
    let mut ess = Vec::with_capacity(trials);
    let mut mom_est = vec![Vec::with_capacity(trials); k];
    let mut mom_plug = vec![Vec::with_capacity(trials); k];
    let mut log_w = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut m = vec![vec![0.0; n]; k];
    for _ in 0..trials {
        for i in 0..n {
            let y = sample(&mut rng);
            log_w[i] = -model.potential(&y) - log_q(&y);
            f[i] = tail(&y);
            for (j, &c) in coords.iter().enumerate() {
                m[j][i] = y[c] * y[c];
            }
        }
        let rep = snis_from_log_weights(&log_w, &f)?;
        tail_est.push(rep.snis.value);
        tail_plug.push(rep.plug_in.value);
        ess.push(rep.effective_sample_size);
        for j in 0..k {
            let rep = snis_from_log_weights(&log_w, &m[j])?;
            mom_est[j].push(rep.snis.value);
            mom_plug[j].push(rep.plug_in.value);
        }
    }
    let total = n * trials;
    let report = |name: String, vals: &[f64]| {
        let (mu, se) = mean_and_se(vals);
        MetricReport::new(name, mu, se.is_finite().then_some(se), total).with_seed(seed)
    };
    Ok(ProposalEstimates {
        snis: report("snis".into(), &tail_est),
        plug_in: report("plug_in".into(), &tail_plug),
        ess: ess.iter().sum::<f64>() / trials as f64,
        moments: coords.iter().zip(&mom_est).map(|(&c, v)| report(moment_name(c), v)).collect(),
        plug_in_moments: coords.iter().zip(&mom_plug).map(|(&c, v)| report(moment_name(c), v)).collect(),
    })
}

fn snis_summary(
    cfg: &RunConfig,
    model: &TargetModel<f64>,
    composite: &CompositeMap<f64>,
    baseline: Option<&WhiteningTransform<f64>>,
) -> CliResult<SnisSummary> {
    let n = cfg.metrics.n_samples;
    let trials = cfg.metrics.snis_trials;
    let c = cfg.metrics.snis_coordinate;
    let t = cfg.metrics.snis_threshold;
    let coords = &cfg.metrics.moment_coordinates;
    let seed = cfg.seed;
    let tail = |y: &[f64]| if y[c].abs() > t { 1.0 } else { 0.0 };
    let d = model.dim();

    let radvi = repeated_snis(
        model,
        |y| composite.log_density(y),
        |r: &mut dyn RngCore| composite.sample(r),
        tail,
        coords,
        n,
        trials,
        seed,
    )?;

    let base = match baseline {
        Some(b) => Some(repeated_snis(
            model,
            |y| gaussian_log_density(b, y),
            |r: &mut dyn RngCore| {
                let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
                b.apply(&z)
            },
            tail,
            coords,
            n,
            trials,
            seed,
        )?),
        None => None,
    };

    let mut reference = Vec::new();
    if model.has_sampler() {
        let mut rng = stage_rng(seed, STREAM_REFERENCE);
        let ys = sample_target(model.as_ref(), n * trials, &mut rng)?;
        let (p, se) = mean_and_se(&ys.iter().map(|y| tail(y)).collect::<Vec<_>>());
        reference.push(MetricReport::new("exact_sampler", p, Some(se), n * trials).with_seed(seed));
        for &k in coords {
            let (mu, se) = mean_and_se(&ys.iter().map(|y| y[k] * y[k]).collect::<Vec<_>>());
            reference.push(MetricReport::new(moment_name(k), mu, Some(se), n * trials).with_seed(seed));
        }
    }

    Ok(SnisSummary {
        coordinate: c,
        threshold: t,
        trials,
        samples_per_trial: n,
        radvi,
        baseline: base,
        reference,
    })
}

/// Output directory: `--out`, then `output_dir`, then `$RADVI_OUTPUT_ROOT/<name>`,
/// then `radvi-runs/<name>`.
pub fn output_dir(config: &RunConfig, opts: &RunOptions) -> PathBuf {
    if let Some(p) = &opts.out_dir {
        return p.clone();
    }
    if let Some(p) = &config.output_dir {
        return p.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("radvi-runs"));
    root.join(config.display_name())
}

/// Runs the experiment and writes `trace.csv`, `summary.json`, and when
/// requested `profile.csv` and `samples.csv`.
pub fn run(config: &RunConfig, opts: &RunOptions) -> CliResult<(RunOutcome, PathBuf)> {
    let dir = output_dir(config, opts);
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", dir.display())))?;
    let outcome = execute(config)?;
    write_artifacts(&outcome, &dir, opts)?;
    Ok((outcome, dir))
}

pub fn write_artifacts(outcome: &RunOutcome, dir: &Path, opts: &RunOptions) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(dir.join("trace.csv"))?);
    outcome.trace.write_csv(&mut w, opts.wallclock)?;
    w.flush()?;

    let json = serde_json::to_string_pretty(&outcome.summary)
        .map_err(|e| CliError::Run(format!("cannot serialize summary: {e}")))?;
    fs::write(dir.join("summary.json"), json + "\n")?;

    if let Some(rows) = &outcome.profile {
        let mut w = BufWriter::new(File::create(dir.join("profile.csv"))?);
        writeln!(w, "quantile,truth,radvi,baseline")?;
        for r in rows {
            let truth = r.truth.map(|v| format!("{v:e}")).unwrap_or_default();
            writeln!(w, "{:e},{},{:e},{:e}", r.quantile, truth, r.radvi, r.baseline)?;
        }
        w.flush()?;
    }

    if opts.samples || outcome.summary.config.metrics.write_samples {
        let cfg = &outcome.summary.config;
        let mut rng = stage_rng(cfg.seed, STREAM_SAMPLES);
        let mut w = BufWriter::new(File::create(dir.join("samples.csv"))?);
        let d = outcome.composite.dict.dim();
        let header: Vec<String> = (0..d).map(|i| format!("y{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for _ in 0..cfg.metrics.n_samples {
            let y = outcome.composite.sample(&mut rng);
            let row: Vec<String> = y.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
    }
    Ok(())
}
