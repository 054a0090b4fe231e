use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use radvi_cli::config::{apply_overrides, from_value, load_value};
use radvi_cli::error::{CliError, CliResult};
use radvi_cli::run::{run, RunOptions};
use radvi_cli::sweep::{parse_values, sweep};
use radvi_cli::validate::{validate, ValidateOptions};
use radvi_cli::{presets, RunConfig};

#[derive(Parser)]
#[command(name = "radvi", version, about = "Radial-transport variational inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file (TOML, or a previous summary.json) or a named preset.
    Run {
        config: String,
        /// Dotted override, e.g. `--set optimizer.iterations=500`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (overrides output_dir and $RADVI_OUTPUT_ROOT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write samples.csv.
        #[arg(long)]
        samples: bool,
        /// Add a wallclock_ms column to trace.csv (breaks byte-for-byte replay).
        #[arg(long)]
        wallclock: bool,
    },
    /// Run a config once per value of one parameter.
    Sweep {
        config: String,
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        wallclock: bool,
    },
    /// Run the fast invariant checks.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_gram: bool,
    },
    /// List the bundled presets.
    Presets,
}

fn load(source: &str, overrides: &[String]) -> CliResult<toml::Value> {
    let mut value = if Path::new(source).exists() {
        load_value(Path::new(source))?
    } else if let Some(p) = presets::find(source) {
        toml::Value::try_from(&p.config).map_err(|e| CliError::Config(e.to_string()))?
    } else {
        return Err(CliError::Config(format!("'{source}' is neither a config file nor a preset")));
    };
    apply_overrides(&mut value, overrides)?;
    Ok(value)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            set,
            out,
            samples,
            wallclock,
        } => {
            let cfg: RunConfig = from_value(load(&config, &set)?)?;
            let (outcome, dir) = run(
                &cfg,
                &RunOptions {
                    out_dir: out,
                    samples,
                    wallclock,
                },
            )?;
            let s = &outcome.summary;
            println!("wrote {}", dir.display());
            println!("final objective {:.6e}", s.final_objective);
            for m in &s.metrics {
                match m.standard_error {
                    Some(se) => println!("{} {:.6e} ± {:.1e}", m.name, m.value, se),
                    None => println!("{} {:.6e}", m.name, m.value),
                }
            }
            if let Some(sn) = &s.snis {
                println!(
                    "P(|y_{}| > {}) over {} x {} draws:",
                    sn.coordinate, sn.threshold, sn.trials, sn.samples_per_trial
                );
                println!("  radVI snis {:.4} (mean ess {:.0})", sn.radvi.snis.value, sn.radvi.ess);
                if let Some(b) = &sn.baseline {
                    println!("  baseline snis {:.4} plug-in {:.4}", b.snis.value, b.plug_in.value);
                }
                if let Some(r) = sn.reference.first() {
                    println!("  exact sampler {:.4}", r.value);
                }
                for (i, m) in sn.radvi.moments.iter().enumerate() {
                    let base = sn.baseline.as_ref().map(|b| b.plug_in_moments[i].value);
                    let truth = sn.reference.get(i + 1).map(|r| r.value);
                    println!(
                        "  {} radVI {:.4} baseline {} exact {}",
                        m.name,
                        m.value,
                        base.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                        truth.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
                    );
                }
            }
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            values,
            set,
            out,
            wallclock,
        } => {
            let base = load(&config, &set)?;
            let carried = from_value(base.clone())?.sweep;
            let (param, values) = match (param, values, carried) {
                (Some(p), Some(v), _) => (p, parse_values(&v)),
                (Some(p), None, _) => (p, Vec::new()),
                (None, v, Some(s)) => (s.param, v.map(|v| parse_values(&v)).unwrap_or(s.values)),
                (None, _, None) => return Err(CliError::Config("sweep needs --param".into())),
            };
            let report = sweep(
                &base,
                &param,
                &values,
                &RunOptions {
                    out_dir: out,
                    samples: false,
                    wallclock,
                },
            )?;
            if report.entries.is_empty() {
                println!("no values; nothing to do");
                return Ok(());
            }
            for e in &report.entries {
                match &e.error {
                    None => println!(
                        "{}={} ok map_error {}",
                        param,
                        e.value,
                        e.map_error.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into())
                    ),
                    Some(err) => println!("{}={} failed: {err}", param, e.value),
                }
            }
            println!("wrote {}", report.root.display());
            match report.failures() {
                0 => Ok(()),
                k => Err(CliError::Run(format!("{k} of {} sweep runs failed", report.entries.len()))),
            }
        }
        Command::Validate { seed, corrupt_gram } => {
            let report = validate(&ValidateOptions { seed, corrupt_gram })?;
            print!("{}", report.render());
            if report.all_passed() {
                Ok(())
            } else {
                Err(CliError::Run("validation failed".into()))
            }
        }
        Command::Presets => {
            for p in presets::all() {
                let tag = if p.slow { " [slow]" } else { "" };
                println!("{:<36}{tag} {}", p.name, p.description);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
