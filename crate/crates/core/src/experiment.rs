//! Experiment drivers behind the command-line tool. Every file the CLI
//! writes comes from one of these functions.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::agents::WorldPolicy;
use crate::config::{ConfigError, ExperimentConfig};
use crate::env::{run_rollout, write_rollouts, EnvError, EnvTag, Rollout};
use crate::feedback::{collect_feedback, write_feedback_csv, FeedbackError, FeedbackSet, FeedbackSpec};
use crate::metric::{bootstrap_envelope, crossover, write_envelope_csv, EnvelopeTable, MetricError};
use crate::report::write_step_facts;
use crate::seed::{self, stream};
use crate::trainer::{write_trace_csv, TrainError, TrainOutcome, Trainer};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("no real feedback values in {0}")]
    NoRealFeedback(PathBuf),
}

fn stream_of(env: EnvTag) -> u64 {
    match env {
        EnvTag::Real => stream::REAL,
        EnvTag::World => stream::WORLD,
    }
}

/// `count` rollouts of one environment; rollout `i` uses seed
/// `derive(master, [env stream, i])`.
pub fn collect_rollouts(cfg: &ExperimentConfig, env: EnvTag, count: usize) -> Result<Vec<Rollout>, ExperimentError> {
    let sim = match env {
        EnvTag::Real => cfg.real_sim(),
        EnvTag::World => cfg.world_sim(cfg.world_policy()?),
    };
    let label = stream_of(env);
    let rollouts: Result<Vec<_>, _> =
        (0..count).into_par_iter().map(|i| run_rollout(&sim, seed::derive(cfg.seed, &[label, i as u64]))).collect();
    Ok(rollouts?)
}

pub fn write_rollout_log(path: &Path, rollouts: &[Rollout]) -> Result<(), ExperimentError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_rollouts(&mut out, rollouts)?;
    out.flush()?;
    Ok(())
}

/// Feedbacks of logged rollouts under the configured execution policy.
pub fn rollout_feedbacks(cfg: &ExperimentConfig, spec: &FeedbackSpec, rollouts: &[Rollout]) -> Result<FeedbackSet, ExperimentError> {
    Ok(collect_feedback(rollouts, spec, &cfg.exp.policy)?)
}

pub fn write_feedback_file(path: &Path, seed: u64, spec: &FeedbackSpec, set: &FeedbackSet) -> Result<(), ExperimentError> {
    write_feedback_csv(BufWriter::new(fs::File::create(path)?), seed, spec, set)?;
    Ok(())
}

/// Read the values of a feedback CSV.
pub fn read_feedback_values(path: &Path) -> Result<Vec<f64>, ExperimentError> {
    let rows = crate::feedback::read_feedback_csv(fs::File::open(path)?)?;
    if rows.is_empty() {
        return Err(ExperimentError::NoRealFeedback(path.into()));
    }
    Ok(rows.into_iter().map(|(_, _, s)| s.value).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityReport {
    pub world_vs_real: EnvelopeTable,
    pub real_vs_real: EnvelopeTable,
    pub crossover: Option<usize>,
    /// Pool sizes after dropped rollouts: real, second real, world.
    pub pools: [usize; 3],
}

/// Bootstrap envelopes of world-vs-real and real-vs-real distances for the
/// configured feedback.
pub fn separability(cfg: &ExperimentConfig, spec: &FeedbackSpec) -> Result<SeparabilityReport, ExperimentError> {
    let sep = &cfg.separability;
    let real_sim = cfg.real_sim();
    let world_sim = cfg.world_sim(cfg.world_policy()?);
    let pool = |sim, label| -> Result<Vec<f64>, ExperimentError> {
        let rollouts: Result<Vec<_>, _> = (0..sep.pool)
            .into_par_iter()
            .map(|i| run_rollout(sim, seed::derive(cfg.seed, &[label, i as u64])))
            .collect();
        Ok(collect_feedback(&rollouts?, spec, &cfg.exp.policy)?.values())
    };
    let real = pool(&real_sim, stream::REAL)?;
    let second = pool(&real_sim, stream::SECOND_REAL)?;
    let world = pool(&world_sim, stream::WORLD)?;
    let table = |a: &[f64], label: &str| -> Result<EnvelopeTable, ExperimentError> {
        Ok(EnvelopeTable {
            d_hat: cfg.d_hat,
            feedback_kind: spec.kind.name(),
            comparison: label.into(),
            rows: bootstrap_envelope(a, &real, &sep.ns, sep.reps, cfg.d_hat, &cfg.kernel, cfg.seed)?,
        })
    };
    let world_vs_real = table(&world, "world_vs_real")?;
    let real_vs_real = table(&second, "real_vs_real")?;
    let crossover = crossover(&world_vs_real.rows, &real_vs_real.rows);
    Ok(SeparabilityReport { world_vs_real, real_vs_real, crossover, pools: [real.len(), second.len(), world.len()] })
}

pub fn write_separability(path: &Path, seed: u64, report: &SeparabilityReport) -> Result<(), ExperimentError> {
    let tables = [report.world_vs_real.clone(), report.real_vs_real.clone()];
    write_envelope_csv(BufWriter::new(fs::File::create(path)?), seed, &tables)?;
    Ok(())
}

/// Layout of a training run's output directory.
pub struct TrainPaths {
    pub checkpoints: PathBuf,
    pub trace: PathBuf,
    pub policy: PathBuf,
    pub facts: PathBuf,
}

impl TrainPaths {
    pub fn new(out: &Path) -> Self {
        Self {
            checkpoints: out.join("checkpoints"),
            trace: out.join("trace.csv"),
            policy: out.join("policy.bin"),
            facts: out.join("facts"),
        }
    }
}

/// Rollouts exported per checkpoint for the stylized-fact time series.
pub const FACTS_ROLLOUTS: usize = 10;

/// Train the configured world policy against `real` feedback values, then
/// export the trace, the final policy and one facts CSV per checkpoint.
pub fn train(cfg: &ExperimentConfig, real: &[f64]) -> Result<TrainOutcome, ExperimentError> {
    let paths = TrainPaths::new(&cfg.output_dir);
    fs::create_dir_all(&cfg.output_dir)?;
    let init = cfg.world_policy()?;
    let sim = cfg.world_sim(init.clone());
    let tcfg = crate::trainer::TrainConfig { seed: cfg.seed, ..cfg.train.clone() };
    let outcome = Trainer { sim: &sim, cfg: &tcfg, real }.train(&init, Some(&paths.checkpoints))?;
    write_trace_csv(BufWriter::new(fs::File::create(&paths.trace)?), cfg.seed, outcome.initial_d_f, &outcome.trace)?;
    outcome.policy.write_to(BufWriter::new(fs::File::create(&paths.policy)?), cfg.seed)?;
    export_checkpoint_facts(cfg, &paths)?;
    Ok(outcome)
}

/// Iterations that have a checkpoint, ascending.
pub fn checkpoint_iterations(dir: &Path) -> Result<Vec<usize>, ExperimentError> {
    let mut its = Vec::new();
    if dir.exists() {
        for entry in fs::read_dir(dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(n) = name.strip_prefix("policy_").and_then(|s| s.strip_suffix(".bin")) {
                if let Ok(n) = n.parse() {
                    its.push(n);
                }
            }
        }
    }
    its.sort_unstable();
    Ok(its)
}

fn export_checkpoint_facts(cfg: &ExperimentConfig, paths: &TrainPaths) -> Result<(), ExperimentError> {
    fs::create_dir_all(&paths.facts)?;
    for (epoch, it) in checkpoint_iterations(&paths.checkpoints)?.into_iter().enumerate() {
        let file = fs::File::open(paths.checkpoints.join(format!("policy_{it:05}.bin")))?;
        let (policy, _) = WorldPolicy::read_from(std::io::BufReader::new(file)).map_err(TrainError::from)?;
        let rollouts = facts_rollouts(cfg, &cfg.world_sim(policy), FACTS_ROLLOUTS)?;
        let out = BufWriter::new(fs::File::create(paths.facts.join(format!("facts_{it:05}.csv")))?);
        write_step_facts(out, cfg.seed, epoch, &cfg.market.fact_levels, &rollouts)?;
    }
    Ok(())
}

fn facts_rollouts(cfg: &ExperimentConfig, sim: &crate::env::SimConfig, count: usize) -> Result<Vec<Rollout>, ExperimentError> {
    let rollouts: Result<Vec<_>, _> =
        (0..count).into_par_iter().map(|i| run_rollout(sim, seed::derive(cfg.seed, &[stream::EVAL, i as u64]))).collect();
    Ok(rollouts?)
}

/// Step-level facts of `count` rollouts of one environment.
pub fn facts_export(cfg: &ExperimentConfig, env: EnvTag, count: usize, path: &Path) -> Result<(), ExperimentError> {
    let rollouts = collect_rollouts(cfg, env, count)?;
    write_step_facts(BufWriter::new(fs::File::create(path)?), cfg.seed, 0, &cfg.market.fact_levels, &rollouts)?;
    Ok(())
}
