//! Named experiment configurations.
//!
//! Desk-scale presets use `d ∈ {5, 10}`; the `d ∈ {25, 50, 100}` variants run
//! at the same settings and are listed as slow.

use radvi_core::optimizer::OptimizerConfig;
use radvi_core::whitening::GviConfig;

use crate::config::{
    DictSection, MetricKind, MetricsSection, RunConfig, SweepSection, TargetSection, WhiteningMethod,
    WhiteningSection,
};

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub slow: bool,
    pub description: String,
    pub config: RunConfig,
}

const FAMILIES: [&str; 4] = ["gaussian", "student_t", "laplace", "logistic"];

/// radVI step size for isotropic runs of each family.
pub fn family_step_size(family: &str) -> f64 {
    match family {
        "logistic" => 5e-2,
        "laplace" => 5e-3,
        _ => 7e-3,
    }
}

fn target(family: &str, d: usize) -> TargetSection {
    TargetSection {
        family: family.to_string(),
        dimension: d,
        dof: (family == "student_t").then_some(10.0),
        scale: (family == "logistic").then_some(1.0),
        mean: None,
        shape: None,
        anisotropic: false,
    }
}

fn base(name: String, target: TargetSection, iterations: usize, requests: Vec<MetricKind>) -> RunConfig {
    let step = family_step_size(&target.family);
    RunConfig {
        name: Some(name),
        seed: 0,
        target,
        dict: DictSection::default(),
        optimizer: OptimizerConfig {
            step_size: step,
            iterations,
            ..OptimizerConfig::default()
        },
        whitening: WhiteningSection::default(),
        metrics: MetricsSection {
            requests,
            ..MetricsSection::default()
        },
        output_dir: None,
        sweep: None,
    }
}

fn isotropic(family: &str, d: usize) -> Preset {
    let name = format!("isotropic-{}-d{d}", family.replace('_', "-"));
    let mut config = base(
        name.clone(),
        target(family, d),
        10_000,
        vec![MetricKind::MapError, MetricKind::Profile, MetricKind::GviBaseline],
    );
    config.whitening.gvi.step_size = family_step_size(family);
    Preset {
        slow: d > 10,
        description: format!("{family} target recovered against the radial oracle, d = {d}"),
        config,
        name,
    }
}

fn anisotropic(family: &str, d: usize, method: WhiteningMethod) -> Preset {
    let tag = match method {
        WhiteningMethod::La => "la",
        _ => "gvi",
    };
    let name = format!("anisotropic-{}-d{d}-{tag}", family.replace('_', "-"));
    let mut t = target(family, d);
    t.anisotropic = true;
    let mut config = base(name.clone(), t, 30_000, vec![MetricKind::Profile, MetricKind::Snis]);
    config.optimizer.step_size = 7e-3;
    config.whitening = WhiteningSection {
        method,
        gvi: GviConfig {
            step_size: 7e-3,
            iterations: 30_000,
            ..GviConfig::default()
        },
        ..WhiteningSection::default()
    };
    Preset {
        slow: d > 10,
        description: format!("{family} with random Σ = AAᵀ + I, {tag} whitening then radVI, d = {d}"),
        config,
        name,
    }
}

fn funnel(d: usize) -> Preset {
    let name = format!("funnel-d{d}-gvi-radvi");
    let mut config = base(name.clone(), target("funnel", d), 10_000, vec![MetricKind::Snis]);
    config.whitening.method = WhiteningMethod::Gvi;
    config.metrics.n_samples = 2_000;
    config.metrics.snis_trials = 1_000;
    config.metrics.moment_coordinates = vec![0, 1];
    Preset {
        slow: d > 10,
        description: format!("Neal's funnel, GVI whitening then radVI; SNIS of P(|z| > 2), d = {d}"),
        config,
        name,
    }
}

fn stationarity() -> Preset {
    let name = "stationarity-gaussian-d5".to_string();
    let mut t = target("gaussian", 5);
    t.anisotropic = true;
    Preset {
        slow: false,
        description: "anisotropic Gaussian without whitening; learned radial law vs exp(-V̄)".into(),
        config: base(name.clone(), t, 10_000, vec![MetricKind::Stationarity, MetricKind::Profile]),
        name,
    }
}

fn sweep(name: &str, param: &str, values: Vec<toml::Value>, description: &str) -> Preset {
    let mut config = base(name.to_string(), target("gaussian", 10), 10_000, vec![MetricKind::MapError]);
    config.sweep = Some(SweepSection {
        param: param.to_string(),
        values,
    });
    Preset {
        name: name.to_string(),
        slow: false,
        description: description.to_string(),
        config,
    }
}

pub fn all() -> Vec<Preset> {
    let mut out = Vec::new();
    for d in [5, 10, 25, 50, 100] {
        for f in FAMILIES {
            out.push(isotropic(f, d));
        }
    }
    for d in [5, 10, 25, 50, 100] {
        for f in FAMILIES {
            if f != "laplace" {
                out.push(anisotropic(f, d, WhiteningMethod::La));
            }
            out.push(anisotropic(f, d, WhiteningMethod::Gvi));
        }
    }
    out.push(stationarity());
    for d in [5, 10, 25] {
        out.push(funnel(d));
    }
    out.push(sweep(
        "alpha-sweep-gaussian-d10",
        "dict.alpha",
        vec![1.0.into(), 0.1.into(), 0.01.into()],
        "isotropic Gaussian d = 10 at α ∈ {1, 0.1, 0.01}",
    ));
    out.push(sweep(
        "seed-sweep-gaussian-d10",
        "seed",
        (1..=5).map(|s: i64| s.into()).collect(),
        "isotropic Gaussian d = 10 at seeds 1..5",
    ));
    out
}

pub fn find(name: &str) -> Option<Preset> {
    all().into_iter().find(|p| p.name == name)
}
