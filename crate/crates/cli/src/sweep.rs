//! One run per value of a single dotted parameter, plus combined CSVs.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use crate::config::{from_value, parse_scalar, set_dotted};
use crate::error::{CliError, CliResult};
use crate::run::{output_dir, run, RunOptions};

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub value: String,
    pub dir: PathBuf,
    /// `None` on success.
    pub error: Option<String>,
    pub map_error: Option<f64>,
    pub final_objective: Option<f64>,
    /// `(iter, objective, map_error)` from the trace.
    pub trace: Vec<(usize, f64, Option<f64>)>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub param: String,
    pub root: PathBuf,
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.error.is_some()).count()
    }
}

/// Splits `--values 1,0.1,0.01` into TOML values.
pub fn parse_values(raw: &str) -> Vec<toml::Value> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_scalar)
        .collect()
}

fn display(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn addressable(tree: &toml::Value, key: &str) -> bool {
    let mut node = tree;
    for part in key.split('.') {
        match node.get(part) {
            Some(n) => node = n,
            None => return false,
        }
    }
    true
}

/// Runs `base` once per value. Individual failures are recorded and the
/// sweep carries on; an unaddressable parameter is a configuration error.
pub fn sweep(base: &toml::Value, param: &str, values: &[toml::Value], opts: &RunOptions) -> CliResult<SweepReport> {
    let base_cfg = from_value(base.clone())?;
    let root = output_dir(&base_cfg, opts);
    if values.is_empty() {
        return Ok(SweepReport {
            param: param.to_string(),
            root,
            entries: Vec::new(),
        });
    }
    let resolved = toml::Value::try_from(base_cfg.resolve()?)
        .map_err(|e| CliError::Config(format!("cannot echo config: {e}")))?;
    if !addressable(&resolved, param) {
        return Err(CliError::Config(format!("sweep parameter '{param}' is not addressable in the config")));
    }
    fs::create_dir_all(&root)
        .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", root.display())))?;

    let mut entries = Vec::new();
    for v in values {
        let label = display(v);
        let dir = root.join(format!("{param}={label}"));
        let run_opts = RunOptions {
            out_dir: Some(dir.clone()),
            ..opts.clone()
        };
        let mut tree = base.clone();
        let result = set_dotted(&mut tree, param, v.clone())
            .and_then(|_| from_value(tree))
            .and_then(|cfg| run(&cfg, &run_opts));
        let entry = match result {
            Ok((outcome, _)) => SweepEntry {
                value: label,
                dir,
                error: None,
                map_error: outcome.summary.metric("map_error").map(|m| m.value),
                final_objective: Some(outcome.summary.final_objective),
                trace: outcome
                    .trace
                    .records
                    .iter()
                    .map(|r| (r.iteration, r.objective, r.map_error))
                    .collect(),
            },
            Err(e) => {
                eprintln!("sweep {param}={label}: {e}");
                SweepEntry {
                    value: label,
                    dir,
                    error: Some(e.to_string()),
                    map_error: None,
                    final_objective: None,
                    trace: Vec::new(),
                }
            }
        };
        entries.push(entry);
    }
    let report = SweepReport {
        param: param.to_string(),
        root,
        entries,
    };
    write_csvs(&report)?;
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn write_csvs(report: &SweepReport) -> CliResult<()> {
    let mut combined = String::from("param,value,iter,objective,map_error,status\n");
    let mut summary = String::from("param,value,status,final_objective,map_error,dir\n");
    for e in &report.entries {
        let status = if e.error.is_some() { "failed" } else { "ok" };
        for &(k, obj, me) in &e.trace {
            combined.push_str(&format!(
                "{},{},{k},{obj:e},{},{status}\n",
                report.param,
                e.value,
                opt(me)
            ));
        }
        if e.error.is_some() {
            combined.push_str(&format!("{},{},,,,{status}\n", report.param, e.value));
        }
        summary.push_str(&format!(
            "{},{},{status},{},{},{}\n",
            report.param,
            e.value,
            opt(e.final_objective),
            opt(e.map_error),
            e.dir.display()
        ));
    }
    fs::File::create(report.root.join("sweep.csv"))?.write_all(combined.as_bytes())?;
    fs::File::create(report.root.join("sweep_summary.csv"))?.write_all(summary.as_bytes())?;
    Ok(())
}
