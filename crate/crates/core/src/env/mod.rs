//! Interaction of the execution agent with a market environment: the real
//! (parametric population) or world (trainable policy) background, rollout
//! records, and prefix snapshots for Monte-Carlo branching.

mod rollout;
mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, BgPopulationConfig, ExpPolicy, WorldPolicy};
use crate::lob::{AgentId, DepthFormula, LevelCount, LobError, Price, Volume};

pub use rollout::{read_rollouts, write_rollouts, BgInteraction, EnvTag, ExpStep, Rollout};
pub(crate) use sim::mc_branch;
pub use sim::{capture_prefix, mc_finish, run_rollout, Progress, RolloutPrefix, Simulator};

/// Owner id of the orders that make up the initial book.
pub const SEED_LIQUIDITY_ID: AgentId = 0;
pub const EXP_AGENT_ID: AgentId = 1;
pub const WORLD_AGENT_ID: AgentId = 2;
pub const FIRST_BG_ID: AgentId = 3;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no world decision ({t}, {j}): step {t} realized {tau} decisions")]
    IndexBeyondRealizedTau { t: usize, j: usize, tau: usize },
    #[error("prefixes can only be captured in a world environment")]
    NotWorldEnv,
    #[error("illegal forced action: {0}")]
    IllegalForcedAction(String),
    #[error("simulator is not waiting for a world decision")]
    NotPaused,
    #[error("bad snapshot: {0}")]
    Snapshot(String),
    #[error("rollout log: {0}")]
    Log(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Lob(#[from] LobError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketConfig {
    /// Currency per tick.
    pub tick_size: f64,
    pub initial_bid: Price,
    pub initial_ask: Price,
    pub initial_levels: usize,
    pub level_volume: Volume,
    /// Levels for which imbalance and volumes are tracked.
    pub fact_levels: Vec<LevelCount>,
    pub depth_formula: DepthFormula,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            tick_size: 0.01,
            initial_bid: 9_999,
            initial_ask: 10_001,
            initial_levels: 10,
            level_volume: 100,
            fact_levels: vec![LevelCount::Top(5), LevelCount::All],
            depth_formula: DepthFormula::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpConfig {
    pub horizon: usize,
    pub parent_volume: Volume,
    /// Currency per share left unfilled at the horizon.
    pub penalty: f64,
    /// Size of one child order, market or limit.
    pub child_volume: Volume,
    /// Ticks above the best bid for a limit child, capped at the best ask.
    pub limit_improve: Price,
    /// End the rollout as soon as the parent order is filled.
    pub stop_on_fill: bool,
    pub policy: ExpPolicy,
}

impl Default for ExpConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            parent_volume: 50,
            penalty: 0.05,
            child_volume: 10,
            limit_improve: 1,
            stop_on_fill: false,
            policy: ExpPolicy::UniformRandom,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    /// Mean number of extra wake-ups per population agent and step.
    pub extra_wakeups: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { extra_wakeups: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldEnvConfig {
    pub policy: WorldPolicy,
    /// Population that keeps trading alongside the world agent.
    pub floor: BgPopulationConfig,
    pub decisions_per_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Real(BgPopulationConfig),
    World(WorldEnvConfig),
}

impl EnvKind {
    pub fn tag(&self) -> EnvTag {
        match self {
            EnvKind::Real(_) => EnvTag::Real,
            EnvKind::World(_) => EnvTag::World,
        }
    }

    pub fn population(&self) -> &BgPopulationConfig {
        match self {
            EnvKind::Real(p) => p,
            EnvKind::World(w) => &w.floor,
        }
    }

    pub fn world_policy(&self) -> Option<&WorldPolicy> {
        match self {
            EnvKind::Real(_) => None,
            EnvKind::World(w) => Some(&w.policy),
        }
    }

    /// The same environment driven by another world policy.
    pub fn with_policy(&self, policy: WorldPolicy) -> Result<EnvKind, EnvError> {
        match self {
            EnvKind::Real(_) => Err(EnvError::NotWorldEnv),
            EnvKind::World(w) => Ok(EnvKind::World(WorldEnvConfig { policy, ..w.clone() })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub market: MarketConfig,
    pub exp: ExpConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    pub env: EnvKind,
}

impl SimConfig {
    pub fn real(population: BgPopulationConfig) -> Self {
        Self {
            market: MarketConfig::default(),
            exp: ExpConfig::default(),
            schedule: ScheduleConfig::default(),
            env: EnvKind::Real(population),
        }
    }

    pub fn world(policy: WorldPolicy, floor: BgPopulationConfig, decisions_per_step: usize) -> Self {
        Self {
            market: MarketConfig::default(),
            exp: ExpConfig::default(),
            schedule: ScheduleConfig::default(),
            env: EnvKind::World(WorldEnvConfig { policy, floor, decisions_per_step }),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Config(m));
        let m = &self.market;
        if !(m.tick_size > 0.0) {
            return bad("tick_size must be positive".into());
        }
        if m.initial_bid <= 0 || m.initial_bid >= m.initial_ask {
            return bad("initial book needs 0 < initial_bid < initial_ask".into());
        }
        if m.initial_levels == 0 || m.level_volume == 0 {
            return bad("initial book needs at least one level of positive volume".into());
        }
        let e = &self.exp;
        if e.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if e.parent_volume == 0 || e.child_volume == 0 {
            return bad("parent and child volumes must be positive".into());
        }
        if e.penalty < 0.0 || e.limit_improve < 0 {
            return bad("penalty and limit_improve must be non-negative".into());
        }
        e.policy.validate().map_err(EnvError::Config)?;
        if !(self.schedule.extra_wakeups >= 0.0 && self.schedule.extra_wakeups.is_finite()) {
            return bad("extra_wakeups must be a finite non-negative rate".into());
        }
        self.env.population().validate().map_err(EnvError::Config)?;
        if let EnvKind::World(w) = &self.env {
            w.policy.arch.validate().map_err(EnvError::Config)?;
            if w.policy.theta.len() != w.policy.arch.param_count() {
                return bad(format!(
                    "world policy has {} parameters, architecture needs {}",
                    w.policy.theta.len(),
                    w.policy.arch.param_count()
                ));
            }
            if w.policy.arch.input_dim != crate::agents::FEATURE_DIM {
                return bad(format!(
                    "world policy input_dim {} does not match the observation size {}",
                    w.policy.arch.input_dim,
                    crate::agents::FEATURE_DIM
                ));
            }
            if w.decisions_per_step == 0 {
                return bad("world env needs at least one decision per step".into());
            }
        }
        Ok(())
    }
}
