//! The step-wise simulator.
//!
//! Each execution step runs: fundamental update, cancellation of the
//! execution agent's stale child order, the execution action, then the
//! background wake-ups in a shuffled order. The simulator can pause right
//! before a world decision is sampled; the paused state serializes to a
//! snapshot that later resumes bit-identically.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::rollout::{BgInteraction, ExpStep, Rollout};
use super::{EnvError, EnvKind, SimConfig, EXP_AGENT_ID, FIRST_BG_ID, SEED_LIQUIDITY_ID, WORLD_AGENT_ID};
use crate::agents::observe::{world_state, WINDOW};
use crate::agents::{BgAgent, ExpAction, ExpAgentState, MarketView, WorldAction, WorldKind, WorldPolicy, WorldState};
use crate::lob::{snapshot_facts, Book, OrderId, OrderRequest, Side, StylizedFacts, Submission, Volume};
use crate::seed;

const SNAPSHOT_MAGIC: &[u8; 4] = b"AGSP";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Waker {
    Bg(usize),
    World,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Phase {
    StepStart,
    Waking { pos: usize },
    Pending { pos: usize, state: WorldState },
    Done,
}

/// Everything that evolves during a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SimState {
    book: Book,
    agents: Vec<BgAgent>,
    fundamental: f64,
    rng: ChaCha8Rng,
    rollout: Rollout,
    current: Option<ExpStep>,
    schedule: Vec<Waker>,
    world_j: usize,
    phase: Phase,
    filled: Volume,
    exp_order: Option<OrderId>,
    /// Mid at the end of the previous step.
    prev_mid: f64,
    /// Last mid seen while both sides were populated.
    last_mid: f64,
    /// Step-end facts, most recent last, at most `WINDOW - 1` of them.
    history: Vec<StylizedFacts>,
    /// Market part of `s_{t-1}`.
    step_facts: StylizedFacts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    /// Waiting for world decision `j` of step `t` (both 1-based).
    Paused { t: usize, j: usize },
    Finished,
}

pub struct Simulator<'a> {
    cfg: &'a SimConfig,
    st: SimState,
    record_states: bool,
}

/// A rollout cut right before a world decision, with a restorable snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutPrefix {
    pub t: usize,
    pub j: usize,
    /// The pending observation `S_t^j`.
    pub state: WorldState,
    pub completed: Vec<ExpStep>,
    /// Step `t` up to (excluding) decision `j`.
    pub current: ExpStep,
    pub snapshot: Vec<u8>,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &'a SimConfig, seed: u64) -> Result<Self, EnvError> {
        cfg.validate()?;
        let m = &cfg.market;
        let mut book = Book::new(m.tick_size);
        for i in 0..m.initial_levels as i64 {
            book.submit(OrderRequest::limit(SEED_LIQUIDITY_ID, Side::Bid, (m.initial_bid - i).max(1), m.level_volume))?;
            book.submit(OrderRequest::limit(SEED_LIQUIDITY_ID, Side::Ask, m.initial_ask + i, m.level_volume))?;
        }
        let start_mid = book.mid().expect("both sides seeded");
        let step_facts = snapshot_facts(&book, start_mid, start_mid, &m.fact_levels);
        let rollout = Rollout {
            seed,
            horizon: cfg.exp.horizon,
            env_kind: cfg.env.tag(),
            start_mid,
            parent_volume: cfg.exp.parent_volume,
            complete: false,
            steps: Vec::new(),
        };
        let st = SimState {
            book,
            agents: cfg.env.population().spawn(FIRST_BG_ID),
            fundamental: start_mid,
            rng: seed::rng(seed),
            rollout,
            current: None,
            schedule: Vec::new(),
            world_j: 0,
            phase: Phase::StepStart,
            filled: 0,
            exp_order: None,
            prev_mid: start_mid,
            last_mid: start_mid,
            history: Vec::new(),
            step_facts,
        };
        Ok(Self { cfg, st, record_states: true })
    }

    /// Whether world observations are stored in the rollout record.
    pub fn set_record_states(&mut self, on: bool) {
        self.record_states = on;
    }

    pub fn rollout(&self) -> &Rollout {
        &self.st.rollout
    }

    pub fn book(&self) -> &Book {
        &self.st.book
    }

    /// Replace the random stream; used to branch Monte-Carlo continuations.
    pub fn reseed(&mut self, seed: u64) {
        self.st.rng = seed::rng(seed);
    }

    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = SNAPSHOT_MAGIC.to_vec();
        out.extend(SNAPSHOT_VERSION.to_le_bytes());
        bincode::serialize_into(&mut out, &self.st).expect("in-memory serialization");
        out
    }

    /// Rebuild a simulator from a snapshot taken under the same config.
    pub fn restore(cfg: &'a SimConfig, bytes: &[u8]) -> Result<Self, EnvError> {
        if bytes.len() < 8 || &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(EnvError::Snapshot("missing magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != SNAPSHOT_VERSION {
            return Err(EnvError::Snapshot(format!("unsupported version {version}")));
        }
        let st: SimState = bincode::deserialize(&bytes[8..]).map_err(|e| EnvError::Snapshot(e.to_string()))?;
        if st.rollout.horizon != cfg.exp.horizon || st.rollout.env_kind != cfg.env.tag() {
            return Err(EnvError::Snapshot("snapshot was taken under another config".into()));
        }
        Ok(Self { cfg, st, record_states: true })
    }

    fn policy(&self) -> Option<&'a WorldPolicy> {
        self.cfg.env.world_policy()
    }

    fn facts_now(&self) -> StylizedFacts {
        snapshot_facts(&self.st.book, self.st.rollout.start_mid, self.st.prev_mid, &self.cfg.market.fact_levels)
    }

    fn remaining(&self) -> Volume {
        self.cfg.exp.parent_volume - self.st.filled
    }

    /// Book the execution agent's fills into the current step.
    fn account(&mut self, sub: &Submission) {
        let tick = self.cfg.market.tick_size;
        let start = self.st.rollout.start_mid;
        for e in &sub.executions {
            if e.taker_owner == EXP_AGENT_ID || e.maker_owner == EXP_AGENT_ID {
                self.st.filled += e.volume;
                if let Some(step) = self.st.current.as_mut() {
                    step.reward -= e.volume as f64 * (e.price as f64 - start) * tick;
                }
            }
        }
        if let Some(m) = self.st.book.mid() {
            self.st.last_mid = m;
        }
    }

    fn submit(&mut self, req: OrderRequest) -> Option<Submission> {
        match self.st.book.submit(req) {
            Ok(sub) => {
                self.account(&sub);
                Some(sub)
            }
            Err(e) => {
                log::trace!("order rejected: {e}");
                None
            }
        }
    }

    fn begin_step(&mut self) {
        let t = self.st.rollout.steps.len() + 1;
        let pop = self.cfg.env.population();
        let st = &mut self.st;
        st.fundamental = pop.fundamental.step(st.fundamental, st.rollout.start_mid, &mut st.rng);

        if let Some(id) = st.exp_order.take() {
            if st.book.order(id).is_some() {
                st.book.submit(OrderRequest::cancel(EXP_AGENT_ID, Side::Bid, id)).expect("own resting order");
            }
        }
        let exp = &self.cfg.exp;
        let remaining = self.remaining();
        let s_prev = ExpAgentState::new(
            (t - 1) as f64 / exp.horizon as f64,
            remaining as f64 / exp.parent_volume as f64,
            &self.st.step_facts,
        );
        let a = exp.policy.act(&s_prev, &mut self.st.rng);
        self.st.current = Some(ExpStep {
            t,
            s_prev,
            a,
            reward: 0.0,
            bg_interactions: Vec::new(),
            facts_after: self.st.step_facts.clone(),
            remaining_after: remaining,
        });
        let size = exp.child_volume.min(remaining);
        let order = match a {
            _ if size == 0 => None,
            ExpAction::Market => Some(OrderRequest::market(EXP_AGENT_ID, Side::Bid, size)),
            ExpAction::Limit => {
                let book = &self.st.book;
                let base = book.best_bid().unwrap_or(self.st.last_mid.floor() as i64);
                let mut price = base + exp.limit_improve;
                if let Some(ask) = book.best_ask() {
                    price = price.min(ask);
                }
                Some(OrderRequest::limit(EXP_AGENT_ID, Side::Bid, price.max(1), size))
            }
            ExpAction::Hold => None,
        };
        if let Some(req) = order {
            if let Some(sub) = self.submit(req) {
                self.st.exp_order = sub.order_id.filter(|id| self.st.book.order(*id).is_some());
            }
        }

        let st = &mut self.st;
        st.schedule.clear();
        let lambda = self.cfg.schedule.extra_wakeups;
        let poisson = (lambda > 0.0).then(|| Poisson::new(lambda).expect("validated rate"));
        for i in 0..st.agents.len() {
            let extra = poisson.as_ref().map_or(0, |p| p.sample(&mut st.rng) as usize);
            st.schedule.extend(std::iter::repeat_n(Waker::Bg(i), 1 + extra));
        }
        if let EnvKind::World(w) = &self.cfg.env {
            st.schedule.extend(std::iter::repeat_n(Waker::World, w.decisions_per_step));
        }
        st.schedule.shuffle(&mut st.rng);
        st.world_j = 0;
    }

    fn end_step(&mut self) {
        let facts = self.facts_now();
        let remaining = self.remaining();
        let st = &mut self.st;
        if let Some(m) = facts.mid {
            st.prev_mid = m;
        }
        let mut step = st.current.take().expect("step in progress");
        step.facts_after = facts.clone();
        step.remaining_after = remaining;
        if step.t == self.cfg.exp.horizon {
            step.reward -= self.cfg.exp.penalty * remaining as f64;
        }
        st.history.push(facts.clone());
        if st.history.len() > WINDOW - 1 {
            st.history.remove(0);
        }
        st.step_facts = facts;
        st.rollout.steps.push(step);
    }

    fn wake_bg(&mut self, i: usize) {
        let pop = self.cfg.env.population();
        let st = &mut self.st;
        let view = MarketView {
            book: &st.book,
            mid: st.book.mid().unwrap_or(st.last_mid),
            fundamental: st.fundamental,
        };
        let mut agent = st.agents[i].clone();
        let order = agent.act(&view, pop, &mut st.rng);
        if let Some(req) = order {
            let id = self.submit(req).and_then(|s| s.order_id);
            agent.on_accepted(&req, id);
        }
        let record = BgInteraction { agent: agent.id, archetype: Some(agent.archetype), state: None, action: None, order };
        self.st.agents[i] = agent;
        self.st.current.as_mut().expect("step in progress").bg_interactions.push(record);
    }

    fn observe_world(&self) -> WorldState {
        let facts = self.facts_now();
        let mine = self.st.book.orders_of(WORLD_AGENT_ID).len();
        world_state(&self.st.book, &facts, &self.st.history, mine)
    }

    fn world_order(&self, a: &WorldAction) -> Option<OrderRequest> {
        let arch = &self.policy().expect("world env").arch;
        let view = MarketView { book: &self.st.book, mid: self.st.book.mid().unwrap_or(self.st.last_mid), fundamental: 0.0 };
        match a.kind {
            WorldKind::Limit => {
                let price = (view.reference(a.side) + a.price_offset).max(1);
                Some(OrderRequest::limit(WORLD_AGENT_ID, a.side, price, arch.size_grid[a.size_bucket]))
            }
            WorldKind::Market => Some(OrderRequest::market(WORLD_AGENT_ID, a.side, arch.size_grid[a.size_bucket])),
            WorldKind::Cancel => {
                let target = self.st.book.orders_of(WORLD_AGENT_ID).into_iter().nth(a.cancel_slot)?;
                Some(OrderRequest::cancel(WORLD_AGENT_ID, target.side, target.id))
            }
            WorldKind::Hold => None,
        }
    }

    fn apply_world(&mut self, a: WorldAction, state: WorldState) {
        let a = a.canonical();
        let order = self.world_order(&a);
        if let Some(req) = order {
            self.submit(req);
        }
        let record = BgInteraction {
            agent: WORLD_AGENT_ID,
            archetype: None,
            state: self.record_states.then_some(state),
            action: Some(a),
            order,
        };
        self.st.current.as_mut().expect("step in progress").bg_interactions.push(record);
        self.st.world_j += 1;
    }

    /// Advance until `stop(t, j)` holds right before world decision `j` of
    /// step `t`, or until the rollout ends.
    pub fn run_until<F: FnMut(usize, usize) -> bool>(&mut self, mut stop: F) -> Result<Progress, EnvError> {
        loop {
            match self.st.phase.clone() {
                Phase::Done => return Ok(Progress::Finished),
                Phase::Pending { .. } => {
                    return Ok(Progress::Paused { t: self.st.rollout.steps.len() + 1, j: self.st.world_j + 1 })
                }
                Phase::StepStart => {
                    let done_steps = self.st.rollout.steps.len();
                    let filled = self.remaining() == 0 && done_steps > 0;
                    if done_steps == self.cfg.exp.horizon || (self.cfg.exp.stop_on_fill && filled) {
                        self.st.rollout.complete = true;
                        self.st.phase = Phase::Done;
                        continue;
                    }
                    self.begin_step();
                    self.st.phase = Phase::Waking { pos: 0 };
                }
                Phase::Waking { pos } if pos == self.st.schedule.len() => {
                    self.end_step();
                    self.st.phase = Phase::StepStart;
                }
                Phase::Waking { pos } => match self.st.schedule[pos] {
                    Waker::Bg(i) => {
                        self.wake_bg(i);
                        self.st.phase = Phase::Waking { pos: pos + 1 };
                    }
                    Waker::World => {
                        let t = self.st.rollout.steps.len() + 1;
                        let j = self.st.world_j + 1;
                        let state = self.observe_world();
                        if stop(t, j) {
                            self.st.phase = Phase::Pending { pos, state };
                            return Ok(Progress::Paused { t, j });
                        }
                        let policy = self.policy().expect("world env");
                        let a = policy.sample(&state, &mut self.st.rng)?;
                        self.apply_world(a, state);
                        self.st.phase = Phase::Waking { pos: pos + 1 };
                    }
                },
            }
        }
    }

    /// Take the pending world decision: `forced` if given, otherwise a draw
    /// from the policy.
    pub fn resume(&mut self, forced: Option<WorldAction>) -> Result<(), EnvError> {
        let Phase::Pending { pos, state } = self.st.phase.clone() else {
            return Err(EnvError::NotPaused);
        };
        let policy = self.policy().expect("paused only in world env");
        let a = match forced {
            Some(a) => {
                policy.log_prob(&state, &a).map_err(|e| EnvError::IllegalForcedAction(e.to_string()))?;
                a
            }
            None => policy.sample(&state, &mut self.st.rng)?,
        };
        self.apply_world(a, state);
        self.st.phase = Phase::Waking { pos: pos + 1 };
        Ok(())
    }

    /// The pending observation, when paused.
    pub fn pending_state(&self) -> Option<&WorldState> {
        match &self.st.phase {
            Phase::Pending { state, .. } => Some(state),
            _ => None,
        }
    }

    pub fn prefix(&self) -> Result<RolloutPrefix, EnvError> {
        let Phase::Pending { state, .. } = &self.st.phase else {
            return Err(EnvError::NotPaused);
        };
        Ok(RolloutPrefix {
            t: self.st.rollout.steps.len() + 1,
            j: self.st.world_j + 1,
            state: state.clone(),
            completed: self.st.rollout.steps.clone(),
            current: self.st.current.clone().expect("paused inside a step"),
            snapshot: self.snapshot(),
        })
    }

    /// Run to the end of the rollout, sampling any pending decision.
    pub fn finish(mut self) -> Result<Rollout, EnvError> {
        if matches!(self.st.phase, Phase::Pending { .. }) {
            self.resume(None)?;
        }
        self.run_until(|_, _| false)?;
        Ok(self.st.rollout)
    }
}

pub fn run_rollout(cfg: &SimConfig, seed: u64) -> Result<Rollout, EnvError> {
    Simulator::new(cfg, seed)?.finish()
}

/// Pause the rollout of `seed` right before world decision `j` of step `t`.
pub fn capture_prefix(cfg: &SimConfig, seed: u64, t: usize, j: usize) -> Result<RolloutPrefix, EnvError> {
    let EnvKind::World(w) = &cfg.env else {
        return Err(EnvError::NotWorldEnv);
    };
    let tau = w.decisions_per_step;
    if t == 0 || t > cfg.exp.horizon || j == 0 || j > tau {
        return Err(EnvError::IndexBeyondRealizedTau { t, j, tau });
    }
    let mut sim = Simulator::new(cfg, seed)?;
    match sim.run_until(|tt, jj| tt == t && jj == j)? {
        Progress::Paused { .. } => sim.prefix(),
        Progress::Finished => Err(EnvError::IndexBeyondRealizedTau { t, j, tau: 0 }),
    }
}

/// Complete the prefix once per seed with `forced` as the pending decision.
pub fn mc_finish(cfg: &SimConfig, prefix: &RolloutPrefix, forced: WorldAction, seeds: &[u64]) -> Result<Vec<Rollout>, EnvError> {
    seeds
        .iter()
        .map(|&s| {
            let mut sim = Simulator::restore(cfg, &prefix.snapshot)?;
            sim.resume(Some(forced))?;
            sim.reseed(s);
            sim.finish()
        })
        .collect()
}

/// Continuation used by the trainer: same as one [`mc_finish`] branch but
/// without storing world observations.
pub(crate) fn mc_branch(cfg: &SimConfig, snapshot: &[u8], forced: WorldAction, seed: u64) -> Result<Rollout, EnvError> {
    let mut sim = Simulator::restore(cfg, snapshot)?;
    sim.set_record_states(false);
    sim.resume(Some(forced))?;
    sim.reseed(seed);
    sim.finish()
}
