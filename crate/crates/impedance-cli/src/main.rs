//! `impedance`: runs one named experiment and writes its outputs.
//!
//! Exit codes: 0 success, 1 invalid config or arguments, 2 a threshold
//! violated under `--check`, 3 the experiment itself failed.

mod config;
mod experiments;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use serde_json::json;

use config::{resolve, ConfigError, Experiment, ExperimentConfig};
use experiments::{Check, Outcome};

#[derive(Debug, Parser)]
#[command(name = "impedance", version, about = "Impedance-map and Schwarz experiments")]
struct Cli {
    #[arg(value_enum)]
    experiment: Experiment,
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 when a threshold check fails.
    #[arg(long)]
    check: bool,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// RNG seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    experiment: &'a str,
    anchor: &'a str,
    version: &'a str,
    config: &'a ExperimentConfig,
    results: &'a serde_json::Value,
    checks: &'a [Check],
    check_passed: bool,
}

fn error_kind(e: &impedance::Error) -> &'static str {
    use impedance::Error::*;
    match e {
        InvalidGeometry(_) => "InvalidGeometry",
        InconsistentGeometry(_) => "InconsistentGeometry",
        InvalidDiscretization(_) => "InvalidDiscretization",
        SolveFailure { .. } => "SolveFailure",
        SegmentOffGrid(_) => "SegmentOffGrid",
        DimensionMismatch(_) => "DimensionMismatch",
        LambdaOutOfRange(_) => "LambdaOutOfRange",
        CutoffTooTight { .. } => "CutoffTooTight",
        GlancingRay { .. } => "GlancingRay",
        NoWitnessFound(_) => "NoWitnessFound",
        LayoutInvalid(_) => "LayoutInvalid",
        InvalidArgument(_) => "InvalidArgument",
        Io(_) => "Io",
    }
}

fn load(cli: &Cli) -> Result<(config::Resolved, PathBuf), ConfigError> {
    let cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results").join(cli.experiment.name()));
    Ok((resolve(cli.experiment, cfg, cli.seed)?, out))
}

fn write_outputs(dir: &Path, r: &config::Resolved, o: &Outcome) -> std::io::Result<bool> {
    fs::create_dir_all(dir)?;
    remove_stale(&dir.join("error.json"))?;
    let passed = o.checks.iter().all(|c| c.passed);
    let summary = Summary {
        experiment: r.experiment.name(),
        anchor: r.experiment.anchor(),
        version: impedance::VERSION,
        config: &r.config,
        results: &o.results,
        checks: &o.checks,
        check_passed: passed,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)?;
    fs::write(dir.join("detail.csv"), &o.detail)?;
    fs::write(dir.join("config.toml"), r.config.to_toml())?;
    for (name, bytes) in &o.extras {
        fs::write(dir.join(name), bytes)?;
    }
    Ok(passed)
}

fn remove_stale(path: &Path) -> std::io::Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}

/// error.json replaces any summary left by an earlier run.
fn write_error(dir: &Path, experiment: Experiment, e: &impedance::Error) {
    let body = json!({
        "experiment": experiment.name(),
        "version": impedance::VERSION,
        "error": error_kind(e),
        "message": e.to_string(),
    });
    let written = fs::create_dir_all(dir)
        .and_then(|_| remove_stale(&dir.join("summary.json")))
        .and_then(|_| fs::write(dir.join("error.json"), serde_json::to_string_pretty(&body).unwrap_or_default() + "\n"));
    if let Err(w) = written {
        eprintln!("could not write error.json: {w}");
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMPL_LOG", "warn")).init();

    let (resolved, out) = match load(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("invalid config: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    log::info!("running {} into {}", resolved.experiment, out.display());

    let outcome = match experiments::run(&resolved) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{} failed: {e}", resolved.experiment);
            write_error(&out, resolved.experiment, &e);
            return ExitCode::from(3);
        }
    };
    let passed = match write_outputs(&out, &resolved, &outcome) {
        Ok(p) => p,
        Err(e) => {
            let e = impedance::Error::from(e);
            eprintln!("writing outputs failed: {e}");
            write_error(&out, resolved.experiment, &e);
            return ExitCode::from(3);
        }
    };
    for c in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("check {} failed: {} {} {}", c.name, c.value, serde_json::to_string(&c.op).unwrap_or_default(), c.limit);
    }
    if cli.check && !passed {
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
