use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use driftdyn::exec::{configure_workers, Execution};
use driftdyn::experiment::{self, ExperimentConfig, ModelConfig, RunSummary, PRESETS};
use driftdyn::{Activation, Error, Result};

/// Order-parameter dynamics and simulations of on-line learning under drift.
#[derive(Parser)]
#[command(name = "driftdyn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the order-parameter ODEs and write the trajectories.
    Ode(RunArgs),
    /// Run Monte Carlo simulations and write mean trajectories.
    Mc(RunArgs),
    /// Run both and write a joined table with differences.
    Compare(RunArgs),
    /// Symmetric fixed point, its spectrum, and configured scans.
    Stability(RunArgs),
    /// Critical drift and weight decay strengths.
    Critical(CriticalArgs),
    /// Print the available presets.
    ListScenarios,
}

#[derive(Args)]
struct Common {
    /// Override a config entry, e.g. `--set mc.runs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: results/<name>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: $DRIFTDYN_WORKERS or all cores].
    #[arg(long)]
    workers: Option<usize>,
    /// `parallel` or `sequential`.
    #[arg(long, default_value = "parallel")]
    exec: Execution,
}

#[derive(Args)]
struct RunArgs {
    /// Preset name or path to a TOML config.
    config: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CriticalArgs {
    /// Preset name or path to a TOML config [default: erf, no drift or decay].
    config: Option<String>,
    #[command(flatten)]
    common: Common,
}

fn split_override(raw: &str) -> Result<(String, String)> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Config(format!("override `{raw}` is not KEY=VALUE")))
}

fn build(base: ExperimentConfig, common: &Common) -> Result<ExperimentConfig> {
    let overrides = common
        .set
        .iter()
        .map(|s| split_override(s))
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = experiment::apply_overrides(base, &overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    match &mut cfg.model {
        ModelConfig::Scm {
            activation,
            delta,
            gamma,
        } => {
            if let Some(a) = common.activation {
                *activation = a;
            }
            if let Some(d) = common.delta {
                *delta = d;
            }
            if let Some(g) = common.gamma {
                *gamma = g;
            }
        }
        ModelConfig::Lvq { gamma, .. } => {
            if common.activation.is_some() || common.delta.is_some() {
                return Err(Error::Config("--activation and --delta apply to the scm model".into()));
            }
            if let Some(g) = common.gamma {
                *gamma = g;
            }
        }
    }
    // an explicit value replaces a sweep over the same parameter
    let swept = cfg.sweep.as_ref().map(|s| s.parameter.clone());
    if (swept.as_deref() == Some("delta") && common.delta.is_some())
        || (swept.as_deref() == Some("gamma") && common.gamma.is_some())
    {
        cfg.sweep = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<RunSummary> {
    let (cfg, common, command) = match cli.command {
        Command::ListScenarios => {
            let mut summary = RunSummary::default();
            for (name, about) in PRESETS {
                summary.lines.push(format!("{name:<10} {about}"));
            }
            return Ok(summary);
        }
        Command::Critical(a) => {
            let base = match &a.config {
                Some(spec) => experiment::load(spec)?,
                None => ExperimentConfig::critical_default(),
            };
            (build(base, &a.common)?, a.common, "critical")
        }
        Command::Ode(a) => (build(experiment::load(&a.config)?, &a.common)?, a.common, "ode"),
        Command::Mc(a) => (build(experiment::load(&a.config)?, &a.common)?, a.common, "mc"),
        Command::Compare(a) => (build(experiment::load(&a.config)?, &a.common)?, a.common, "compare"),
        Command::Stability(a) => (build(experiment::load(&a.config)?, &a.common)?, a.common, "stability"),
    };
    configure_workers(common.workers)?;
    let dir = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    let exec = common.exec;
    match command {
        "ode" => experiment::run_ode(&cfg, &dir, exec),
        "mc" => experiment::run_mc(&cfg, &dir, exec),
        "compare" => experiment::run_compare(&cfg, &dir, exec),
        "stability" => experiment::run_stability(&cfg, &dir, exec),
        _ => experiment::run_critical(&cfg, &dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // malformed arguments count as configuration errors
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for file in &summary.files {
                eprintln!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
