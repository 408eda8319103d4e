//! Market participants: the parametric background population, the trainable
//! world policy and the experimental execution agent.

pub mod background;
pub mod exp;
pub mod kde;
pub mod observe;
pub mod qtable;
pub mod world;

use thiserror::Error;

pub use background::{Archetype, BgAgent, BgPopulationConfig, MarketView};
pub use exp::{exp_act_aggressive, ExpAction, ExpAgentState, ExpPolicy};
pub use observe::{world_state, FEATURE_DIM};
pub use qtable::{Discretizer, QTable};
pub use world::{PolicyArch, WorldAction, WorldKind, WorldPolicy, WorldState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("illegal action {0}")]
    IllegalAction(String),
    #[error("state has {got} features, policy expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("bad policy file: {0}")]
    Format(String),
    #[error("all samples coincide, median bandwidth is zero")]
    DegenerateSamples,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}
