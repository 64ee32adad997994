//! `bloomlab run|sweep --config FILE --out DIR`.
//!
//! Exit status: 0 when every assertion passes, 1 on an assertion failure or a
//! numerical error, 2 on a config or output error.

mod config;
mod experiments;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::{Axis, ConfigError, RunConfig};
use report::SweepPoint;

#[derive(Parser)]
#[command(name = "bloomlab", version, about = "Batch experiments for two-weight commutator estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment once.
    Run(Common),
    /// Run the experiment at every point of an axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Overrides `[sweep].axis`.
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        /// Comma-separated values; overrides `[sweep].values`.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for restarts and sweep points.
    #[arg(long, env = "BLOOMLAB_WORKERS")]
    workers: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AxisArg {
    M,
    P,
    Q,
    Pq,
    Symbol,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Axis {
        match a {
            AxisArg::M => Axis::M,
            AxisArg::P => Axis::P,
            AxisArg::Q => Axis::Q,
            AxisArg::Pq => Axis::Pq,
            AxisArg::Symbol => Axis::Symbol,
        }
    }
}

enum Failure {
    Config(String),
    Assertion(String),
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&common.config).map_err(|e| Failure::Config(e.0))?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Failure::Config("workers must be positive".into()));
        }
        // Fails only if a pool exists already, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    Ok(cfg)
}

fn run_once(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let out = experiments::run(&cfg).map_err(|e| Failure::Assertion(format!("error: {e:#}")))?;
    report::emit(&common.out, &cfg, &out).map_err(|e| Failure::Config(format!("{e:#}")))?;
    let failed = out.checks.iter().filter(|c| !c.pass).count();
    println!(
        "{:?}: {} assertions, {failed} failed; reports in {}",
        cfg.experiment,
        out.checks.len(),
        common.out.display()
    );
    match out.first_failure() {
        Some(c) => Err(Failure::Assertion(format!("assertion {} failed: {}", c.name, c.detail))),
        None => Ok(()),
    }
}

fn point_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("point-{i:03}"))
}

fn sweep(common: &Common, axis: Option<AxisArg>, values: Option<Vec<f64>>) -> Result<(), Failure> {
    let cfg = load(common)?;
    let axis: Axis = match (axis, &cfg.sweep) {
        (Some(a), _) => a.into(),
        (None, Some(s)) => s.axis,
        (None, None) => return Err(Failure::Config("sweep needs --axis or a [sweep] table".into())),
    };
    let values = values.or_else(|| cfg.sweep.as_ref().map(|s| s.values.clone())).unwrap_or_default();
    let points: Vec<SweepPoint> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let result = cfg
                .at_point(axis, v)
                .and_then(|c| c.resolve().map(|_| c))
                .map_err(|ConfigError(e)| ("config-error", e))
                .and_then(|c| {
                    let o = experiments::run(&c).map_err(|e| ("error", format!("{e:#}")))?;
                    report::emit(&point_dir(&common.out, i), &c, &o).map_err(|e| ("error", format!("{e:#}")))?;
                    Ok(o)
                });
            SweepPoint { value: v, result }
        })
        .collect();
    let axis_name = serde_json::to_value(axis).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    report::emit_sweep(&common.out, &cfg, &axis_name, &points).map_err(|e| Failure::Config(format!("{e:#}")))?;
    let bad = points.iter().filter(|p| !p.result.as_ref().is_ok_and(|o| o.passed())).count();
    println!("sweep over {axis_name}: {} points, {bad} not passing; table in {}", points.len(), common.out.display());
    match points.iter().position(|p| !p.result.as_ref().is_ok_and(|o| o.passed())) {
        Some(i) => Err(Failure::Assertion(format!("sweep point {i} did not pass"))),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => run_once(c),
        Command::Sweep { common, axis, values } => sweep(common, *axis, values.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}
