//! Policy-gradient calibration of the world policy.
//!
//! Each iteration runs one training rollout in the world environment. At the
//! last world decision of each of the first `t0` steps it samples `b`
//! counterfactual actions, scores each by the distance between the feedbacks
//! of `N` Monte-Carlo completions and the fixed real feedbacks, and
//! descends along `sum_t (1/b) sum_k Q_k grad log p(A_k | S_t)`.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, WorldAction, WorldPolicy};
use crate::csvio::{fmt_f64, fmt_opt, reader, writer_with_meta};
use crate::env::{mc_branch, run_rollout, EnvError, Progress, Rollout, SimConfig, Simulator};
use crate::feedback::{collect_feedback, FeedbackError, FeedbackSet, FeedbackSpec};
use crate::metric::{DHat, KernelSpec, MetricError};
use crate::seed::{self, stream};

pub mod reinforce;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite gradient at iteration {iteration}, step {t}, sample {k}: Q = {q}")]
    NaNGradient { iteration: usize, t: usize, k: usize, q: f64 },
    #[error("evaluation produced fewer than two feedbacks")]
    EvaluationDropped,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Monte-Carlo completions per sampled action.
    pub n_mc: usize,
    /// Size of the real feedback collection.
    pub n_real: usize,
    /// Actions sampled per step.
    pub b: usize,
    /// Number of leading steps that contribute to the gradient.
    pub t0: usize,
    pub lr: f64,
    /// The learning rate halves every this many iterations.
    pub halve_every: usize,
    pub iterations: usize,
    /// Subtract the mean Q of the `b` samples of a step.
    pub baseline: bool,
    /// World rollouts per evaluation of the distance.
    pub eval_rollouts: usize,
    /// Evaluate and checkpoint every this many iterations.
    pub eval_every: usize,
    pub feedback: FeedbackSpec,
    pub d_hat: DHat,
    pub kernel: KernelSpec,
    /// Run Monte-Carlo completions on the rayon pool. Results do not depend
    /// on this flag.
    pub parallel: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_mc: 5,
            n_real: 100,
            b: 3,
            t0: 5,
            lr: 0.5,
            halve_every: 10,
            iterations: 100,
            baseline: false,
            eval_rollouts: 100,
            eval_every: 10,
            feedback: FeedbackSpec::default(),
            d_hat: DHat::Mmd,
            kernel: KernelSpec::default(),
            parallel: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, horizon: usize) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.n_mc < 2 {
            return bad("n_mc must be at least 2");
        }
        if self.b == 0 {
            return bad("b must be at least 1");
        }
        if self.t0 == 0 || self.t0 > horizon {
            return bad("t0 must lie in [1, horizon]");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if self.halve_every == 0 || self.eval_every == 0 {
            return bad("halve_every and eval_every must be positive");
        }
        if self.eval_rollouts < 2 {
            return bad("eval_rollouts must be at least 2");
        }
        self.feedback.validate()?;
        Ok(())
    }

    /// Learning rate in effect at 0-based iteration `i`.
    pub fn lr_at(&self, i: usize) -> f64 {
        self.lr * 0.5f64.powi((i / self.halve_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// 1-based index of the update.
    pub iteration: usize,
    /// Evaluation distance after the update, on evaluation iterations.
    pub d_f: Option<f64>,
    pub grad_norm: f64,
    pub lr: f64,
    pub seconds: f64,
    /// `(t, k)` terms skipped because every completion lacked feedback.
    pub dropped_terms: usize,
}

/// World-policy training against a fixed set of real feedbacks.
pub struct Trainer<'a> {
    /// World environment; its policy is replaced by the one being trained.
    pub sim: &'a SimConfig,
    pub cfg: &'a TrainConfig,
    pub real: &'a [f64],
}

/// Feedback of a rollout set under the environment's execution policy.
pub fn rollout_feedback(sim: &SimConfig, spec: &FeedbackSpec, rollouts: &[Rollout]) -> Result<FeedbackSet, FeedbackError> {
    collect_feedback(rollouts, spec, &sim.exp.policy)
}

/// Run `count` rollouts with seeds `derive(master, [label, i])` and compute
/// their feedbacks.
pub fn feedback_pool(
    sim: &SimConfig,
    spec: &FeedbackSpec,
    count: usize,
    master: u64,
    label: u64,
    parallel: bool,
) -> Result<FeedbackSet, TrainError> {
    let run = |i: usize| run_rollout(sim, seed::derive(master, &[label, i as u64]));
    let rollouts: Result<Vec<Rollout>, EnvError> =
        if parallel { (0..count).into_par_iter().map(run).collect() } else { (0..count).map(run).collect() };
    Ok(rollout_feedback(sim, spec, &rollouts?)?)
}

struct Branch {
    t: usize,
    k: usize,
    snapshot: usize,
    action: WorldAction,
    grad: Vec<f64>,
}

impl Trainer<'_> {
    fn policy_env(&self, policy: &WorldPolicy) -> Result<SimConfig, TrainError> {
        Ok(SimConfig { env: self.sim.env.with_policy(policy.clone())?, ..self.sim.clone() })
    }

    /// Distance between the feedbacks of `rollouts` and the real ones;
    /// `None` when fewer than two rollouts yield a feedback.
    fn distance(&self, sim: &SimConfig, rollouts: &[Rollout]) -> Result<Option<f64>, TrainError> {
        let world = rollout_feedback(sim, &self.cfg.feedback, rollouts)?.values();
        if world.len() < 2 {
            return Ok(None);
        }
        Ok(Some(self.cfg.d_hat.estimate(&world, self.real, &self.cfg.kernel)?))
    }

    /// Monte-Carlo estimate of `Q_f` for taking `action` at a paused state.
    pub fn q_value(&self, sim: &SimConfig, snapshot: &[u8], action: WorldAction, seeds: &[u64]) -> Result<Option<f64>, TrainError> {
        let rollouts: Result<Vec<Rollout>, EnvError> = seeds.iter().map(|&s| mc_branch(sim, snapshot, action, s)).collect();
        self.distance(sim, &rollouts?)
    }

    /// Distance of the policy's feedbacks on the held-out evaluation seeds.
    pub fn evaluate(&self, policy: &WorldPolicy) -> Result<f64, TrainError> {
        let sim = self.policy_env(policy)?;
        let set = feedback_pool(&sim, &self.cfg.feedback, self.cfg.eval_rollouts, self.cfg.seed, stream::EVAL, self.cfg.parallel)?;
        if set.samples.len() < 2 {
            return Err(TrainError::EvaluationDropped);
        }
        Ok(self.cfg.d_hat.estimate(&set.values(), self.real, &self.cfg.kernel)?)
    }

    /// Gradient estimate of iteration `i` (0-based) and the number of
    /// dropped terms.
    pub fn gradient(&self, policy: &WorldPolicy, i: usize) -> Result<(Vec<f64>, usize), TrainError> {
        let cfg = self.cfg;
        let sim = self.policy_env(policy)?;
        let iter_seed = seed::derive(cfg.seed, &[stream::ITERATION, i as u64]);
        let tau = match &sim.env {
            crate::env::EnvKind::World(w) => w.decisions_per_step,
            crate::env::EnvKind::Real(_) => return Err(EnvError::NotWorldEnv.into()),
        };

        // walk the training rollout, branching at the last decision of each step
        let mut main = Simulator::new(&sim, seed::derive(iter_seed, &[stream::ROLLOUT]))?;
        main.set_record_states(false);
        let mut snapshots = Vec::new();
        let mut branches = Vec::new();
        for t in 1..=cfg.t0 {
            match main.run_until(|tt, jj| tt == t && jj == tau)? {
                Progress::Finished => break,
                Progress::Paused { .. } => {}
            }
            let state = main.pending_state().expect("paused").clone();
            snapshots.push(main.snapshot());
            for k in 0..cfg.b {
                let mut rng = seed::rng(seed::derive(iter_seed, &[stream::WORLD, t as u64, k as u64]));
                let action = policy.sample(&state, &mut rng)?;
                let (_, grad) = policy.log_prob_grad(&state, &action)?;
                branches.push(Branch { t, k, snapshot: snapshots.len() - 1, action, grad });
            }
            main.resume(None)?;
        }

        let q_of = |br: &Branch| -> Result<Option<f64>, TrainError> {
            let seeds: Vec<u64> = (0..cfg.n_mc)
                .map(|n| seed::derive(iter_seed, &[stream::MC, br.t as u64, br.k as u64, n as u64]))
                .collect();
            self.q_value(&sim, &snapshots[br.snapshot], br.action, &seeds)
        };
        let qs: Vec<Option<f64>> = if cfg.parallel {
            branches.par_iter().map(q_of).collect::<Result<_, _>>()?
        } else {
            branches.iter().map(q_of).collect::<Result<_, _>>()?
        };

        let mut grad = vec![0.0; policy.len()];
        let mut dropped = 0;
        for t in 1..=cfg.t0 {
            let idx: Vec<usize> = (0..branches.len()).filter(|&x| branches[x].t == t).collect();
            let live: Vec<f64> = idx.iter().filter_map(|&x| qs[x]).collect();
            let base = if cfg.baseline && !live.is_empty() { live.iter().sum::<f64>() / live.len() as f64 } else { 0.0 };
            for &x in &idx {
                let br = &branches[x];
                let Some(q) = qs[x] else {
                    dropped += 1;
                    log::debug!("iteration {i}: all completions of ({}, {}) lacked feedback", br.t, br.k);
                    continue;
                };
                if !q.is_finite() {
                    return Err(TrainError::NaNGradient { iteration: i, t: br.t, k: br.k, q });
                }
                reinforce::accumulate(&mut grad, q, base, 1.0 / cfg.b as f64, &br.grad);
            }
        }
        if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
            let br = &branches[bad.min(branches.len().saturating_sub(1))];
            return Err(TrainError::NaNGradient { iteration: i, t: br.t, k: br.k, q: f64::NAN });
        }
        Ok((grad, dropped))
    }

    /// One update at 0-based iteration `i`.
    pub fn grad_step(&self, policy: &WorldPolicy, i: usize) -> Result<(WorldPolicy, TraceRow), TrainError> {
        let start = Instant::now();
        let lr = self.cfg.lr_at(i);
        let (grad, dropped_terms) = self.gradient(policy, i)?;
        let mut next = policy.clone();
        if lr != 0.0 {
            for (th, g) in next.theta.iter_mut().zip(&grad) {
                *th -= lr * g;
            }
        }
        let row = TraceRow {
            iteration: i + 1,
            d_f: None,
            grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            lr,
            seconds: start.elapsed().as_secs_f64(),
            dropped_terms,
        };
        Ok((next, row))
    }

    /// Run the configured iterations from `init`. With a checkpoint
    /// directory, progress is saved every `eval_every` iterations and an
    /// interrupted run resumes from the latest checkpoint.
    pub fn train(&self, init: &WorldPolicy, checkpoints: Option<&Path>) -> Result<TrainOutcome, TrainError> {
        self.cfg.validate(self.sim.exp.horizon)?;
        let mut policy = init.clone();
        let mut trace = Vec::new();
        let mut initial_d_f = None;
        let mut start_iter = 0;
        if let Some(dir) = checkpoints {
            fs::create_dir_all(dir)?;
            if let Some(state) = load_latest(dir)? {
                (policy, trace, initial_d_f, start_iter) = state;
                log::info!("resuming training at iteration {start_iter}");
            }
        }
        if start_iter == 0 && self.cfg.iterations > 0 {
            initial_d_f = Some(self.evaluate(&policy)?);
            if let Some(dir) = checkpoints {
                save_checkpoint(dir, self.cfg, &policy, &trace, initial_d_f, 0)?;
            }
        }
        for i in start_iter..self.cfg.iterations {
            let (next, mut row) = self.grad_step(&policy, i)?;
            policy = next;
            let done = i + 1;
            if done % self.cfg.eval_every == 0 || done == self.cfg.iterations {
                row.d_f = Some(self.evaluate(&policy)?);
            }
            log::info!(
                "iteration {done}: lr {:.3e} |g| {:.4} D_f {}",
                row.lr,
                row.grad_norm,
                row.d_f.map_or("-".into(), |d| format!("{d:.5}"))
            );
            trace.push(row);
            if let Some(dir) = checkpoints {
                if row.d_f.is_some() {
                    save_checkpoint(dir, self.cfg, &policy, &trace, initial_d_f, done)?;
                }
            }
        }
        Ok(TrainOutcome { policy, trace, initial_d_f })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub policy: WorldPolicy,
    pub trace: Vec<TraceRow>,
    /// Evaluation distance of the initial policy.
    pub initial_d_f: Option<f64>,
}

impl TrainOutcome {
    /// Distance at the last evaluation, or the initial one.
    pub fn final_d_f(&self) -> Option<f64> {
        self.trace.iter().rev().find_map(|r| r.d_f).or(self.initial_d_f)
    }
}

pub const TRACE_HEADER: [&str; 6] = ["iteration", "D_f", "grad_norm", "r", "seconds", "dropped_terms"];

pub fn write_trace_csv<W: std::io::Write>(out: W, seed: u64, initial_d_f: Option<f64>, trace: &[TraceRow]) -> std::io::Result<()> {
    let mut w = writer_with_meta(out, seed)?;
    w.write_record(TRACE_HEADER)?;
    if let Some(d) = initial_d_f {
        w.write_record(["0", &fmt_f64(d), "", "", "", ""])?;
    }
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            fmt_opt(r.d_f.map(fmt_f64)),
            fmt_f64(r.grad_norm),
            fmt_f64(r.lr),
            fmt_f64(r.seconds),
            r.dropped_terms.to_string(),
        ])?;
    }
    w.flush()
}

pub fn read_trace_csv<R: std::io::Read>(input: R) -> Result<(Option<f64>, Vec<TraceRow>), TrainError> {
    let bad = |e: String| TrainError::Checkpoint(format!("trace: {e}"));
    let mut rdr = reader(input);
    let mut initial = None;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| -> Result<f64, TrainError> { rec[i].parse().map_err(|e| bad(format!("{e}"))) };
        let iteration: usize = rec[0].parse().map_err(|e| bad(format!("{e}")))?;
        let d_f = if rec[1].is_empty() { None } else { Some(f(1)?) };
        if iteration == 0 {
            initial = d_f;
            continue;
        }
        rows.push(TraceRow {
            iteration,
            d_f,
            grad_norm: f(2)?,
            lr: f(3)?,
            seconds: f(4)?,
            dropped_terms: rec[5].parse().map_err(|e| bad(format!("{e}")))?,
        });
    }
    Ok((initial, rows))
}

fn checkpoint_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(format!("policy_{iteration:05}.bin"))
}

fn save_checkpoint(
    dir: &Path,
    cfg: &TrainConfig,
    policy: &WorldPolicy,
    trace: &[TraceRow],
    initial_d_f: Option<f64>,
    iteration: usize,
) -> Result<(), TrainError> {
    policy.write_to(BufWriter::new(fs::File::create(checkpoint_path(dir, iteration))?), cfg.seed)?;
    let json = serde_json::to_string_pretty(cfg).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    fs::write(dir.join("train_config.json"), json + "\n")?;
    write_trace_csv(BufWriter::new(fs::File::create(dir.join("trace.csv"))?), cfg.seed, initial_d_f, trace)?;
    Ok(())
}

type Resumed = (WorldPolicy, Vec<TraceRow>, Option<f64>, usize);

fn load_latest(dir: &Path) -> Result<Option<Resumed>, TrainError> {
    let mut latest = None;
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(n) = name.strip_prefix("policy_").and_then(|s| s.strip_suffix(".bin")) {
            if let Ok(n) = n.parse::<usize>() {
                latest = latest.max(Some(n));
            }
        }
    }
    let Some(iteration) = latest else { return Ok(None) };
    let (policy, _) = WorldPolicy::read_from(BufReader::new(fs::File::open(checkpoint_path(dir, iteration))?))
        .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    let (initial, mut trace) = read_trace_csv(fs::File::open(dir.join("trace.csv"))?)?;
    trace.retain(|r| r.iteration <= iteration);
    Ok(Some((policy, trace, initial, iteration)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub t0: usize,
    pub b: usize,
    pub final_d_f: f64,
}

/// Train once per `(t0, b)` combination and pick the smallest final
/// evaluation distance (first cell wins ties).
pub fn grid_search(
    sim: &SimConfig,
    cfg: &TrainConfig,
    real: &[f64],
    init: &WorldPolicy,
    t0s: &[usize],
    bs: &[usize],
) -> Result<(GridCell, Vec<GridCell>), TrainError> {
    let mut cells = Vec::new();
    for &t0 in t0s {
        for &b in bs {
            let cell_cfg = TrainConfig { t0, b, ..cfg.clone() };
            let out = Trainer { sim, cfg: &cell_cfg, real }.train(init, None)?;
            let final_d_f = out.final_d_f().ok_or(TrainError::EvaluationDropped)?;
            cells.push(GridCell { t0, b, final_d_f });
        }
    }
    let best = cells
        .iter()
        .cloned()
        .reduce(|a, c| if c.final_d_f < a.final_d_f { c } else { a })
        .ok_or_else(|| TrainError::Config("empty grid".into()))?;
    Ok((best, cells))
}
