use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agentsim::config::{ConfigError, ExperimentConfig};
use agentsim::env::{read_rollouts, EnvTag, Rollout};
use agentsim::experiment::{self, ExperimentError};
use agentsim::feedback::{Estimator, FeedbackKind, FeedbackSpec};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agentsim", version, about = "Order-book market simulator and world-policy calibration")]
struct Cli {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.lr=0.25`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (same as `--set seed=N`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Env {
    Real,
    World,
}

impl From<Env> for EnvTag {
    fn from(e: Env) -> Self {
        match e {
            Env::Real => EnvTag::Real,
            Env::World => EnvTag::World,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded rollouts and write them as a JSONL log.
    Rollouts {
        #[arg(long, value_enum)]
        env: Env,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute per-rollout feedbacks from rollout logs.
    Feedback {
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        /// Feedback kind, e.g. Mkt2NextReturn or EpisodeReward.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        naive: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap envelopes of world-vs-real and real-vs-real distances.
    Separability {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the world policy against a real feedback CSV.
    Train {
        #[arg(long)]
        real: PathBuf,
    },
    /// Export step-level stylized facts of seeded rollouts.
    FactsExport {
        #[arg(long, value_enum)]
        env: Env,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let base = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = base.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn feedback_spec(cfg: &ExperimentConfig, kind: Option<&str>, naive: bool) -> Result<FeedbackSpec> {
    let mut spec = cfg.feedback.clone();
    if let Some(k) = kind {
        spec.kind = FeedbackKind::parse(k).ok_or_else(|| ConfigError::Invalid(format!("unknown feedback kind {k}")))?;
    }
    if naive {
        spec.estimator = Estimator::Naive;
    }
    Ok(spec)
}

fn read_logs(paths: &[PathBuf]) -> Result<Vec<Rollout>> {
    let mut all = Vec::new();
    for p in paths {
        let file = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        all.extend(read_rollouts(std::io::BufReader::new(file)).with_context(|| format!("parsing {}", p.display()))?);
    }
    Ok(all)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Rollouts { env, count, out } => {
            ensure_parent(out)?;
            let rollouts = experiment::collect_rollouts(&cfg, (*env).into(), *count)?;
            experiment::write_rollout_log(out, &rollouts)?;
            let filled = rollouts.iter().filter(|r| r.remaining() == 0).count();
            println!("wrote {} rollouts to {} ({filled} fully executed)", rollouts.len(), out.display());
        }
        Command::Feedback { logs, kind, naive, out } => {
            ensure_parent(out)?;
            let spec = feedback_spec(&cfg, kind.as_deref(), *naive)?;
            let rollouts = read_logs(logs)?;
            let set = experiment::rollout_feedbacks(&cfg, &spec, &rollouts)?;
            experiment::write_feedback_file(out, cfg.seed, &spec, &set)?;
            println!("{} feedbacks ({} dropped) written to {}", set.samples.len(), set.dropped, out.display());
        }
        Command::Separability { kind, out } => {
            ensure_parent(out)?;
            let spec = feedback_spec(&cfg, kind.as_deref(), false)?;
            let report = experiment::separability(&cfg, &spec)?;
            experiment::write_separability(out, cfg.seed, &report)?;
            match report.crossover {
                Some(n) => println!("{}: world separates from real from N = {n}", spec.kind.name()),
                None => println!("{}: no separation on the grid", spec.kind.name()),
            }
        }
        Command::Train { real } => {
            let values = experiment::read_feedback_values(real)?;
            let outcome = experiment::train(&cfg, &values)?;
            let fmt = |d: Option<f64>| d.map_or("-".to_string(), |d| format!("{d:.5}"));
            println!(
                "trained {} iterations: D_f {} -> {} (outputs in {})",
                outcome.trace.len(),
                fmt(outcome.initial_d_f),
                fmt(outcome.final_d_f()),
                cfg.output_dir.display()
            );
        }
        Command::FactsExport { env, count, out } => {
            ensure_parent(out)?;
            experiment::facts_export(&cfg, (*env).into(), *count, out)?;
            println!("facts of {count} rollouts written to {}", out.display());
        }
    }
    Ok(())
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some() || matches!(e.downcast_ref::<ExperimentError>(), Some(ExperimentError::Config(_)))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

