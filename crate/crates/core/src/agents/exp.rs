//! The experimental (execution) agent: its observation, action codes and the
//! rule-based or stochastic policies it can run.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lob::{LevelCount, StylizedFacts};

/// Number of entries in [`ExpAgentState::features`].
pub const EXP_FEATURES: usize = 8;

/// What the execution agent sees before acting: its private progress plus a
/// subset of market facts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpAgentState {
    pub elapsed_frac: f64,
    pub remaining_frac: f64,
    pub pace_gap: f64,
    pub imbalance_5: f64,
    pub imbalance_all: f64,
    /// Ticks; 0 when unavailable.
    pub spread: f64,
    pub price_impact: f64,
    pub direction: f64,
}

impl ExpAgentState {
    pub fn new(elapsed_frac: f64, remaining_frac: f64, market: &StylizedFacts) -> Self {
        let elapsed_frac = elapsed_frac.clamp(0.0, 1.0);
        let remaining_frac = remaining_frac.clamp(0.0, 1.0);
        Self {
            elapsed_frac,
            remaining_frac,
            pace_gap: elapsed_frac - (1.0 - remaining_frac),
            imbalance_5: market.imbalance(LevelCount::Top(5)).unwrap_or(0.5),
            imbalance_all: market.imbalance(LevelCount::All).unwrap_or(0.5),
            spread: market.spread.unwrap_or(0) as f64,
            price_impact: market.price_impact.unwrap_or(0.0),
            direction: market.direction as f64,
        }
    }

    /// Feature vector used by propensity models, in a fixed order.
    pub fn features(&self) -> [f64; EXP_FEATURES] {
        [
            self.elapsed_frac,
            self.remaining_frac,
            self.pace_gap,
            self.imbalance_5,
            self.imbalance_all,
            self.spread,
            self.price_impact,
            self.direction,
        ]
    }
}

/// Action codes of the execution agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ExpAction {
    Market = 0,
    Limit = 1,
    Hold = 2,
}

impl ExpAction {
    pub const ALL: [ExpAction; 3] = [ExpAction::Market, ExpAction::Limit, ExpAction::Hold];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Treatment indicator for causal feedbacks: placing a market order.
    pub fn is_treated(self) -> bool {
        self == ExpAction::Market
    }
}

impl From<ExpAction> for u8 {
    fn from(a: ExpAction) -> u8 {
        a.code()
    }
}

impl TryFrom<u8> for ExpAction {
    type Error = String;

    fn try_from(code: u8) -> Result<Self, String> {
        match code {
            0 => Ok(ExpAction::Market),
            1 => Ok(ExpAction::Limit),
            2 => Ok(ExpAction::Hold),
            c => Err(format!("unknown exp action code {c}")),
        }
    }
}

/// Execution policies. Every variant holds once the parent order is filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ExpPolicy {
    /// Keep placing fixed-size limit orders until the parent order is filled.
    Aggressive,
    /// Zero intelligence: uniform over market / limit / hold.
    UniformRandom,
    /// Market order with probability `eps`, otherwise a limit order.
    EpsMarket { eps: f64 },
    /// Market order with probability `sigmoid(bias + weights . features)`,
    /// otherwise a limit order. The state drives the treatment.
    Logistic { bias: f64, weights: [f64; EXP_FEATURES] },
    AlwaysHold,
}

impl Default for ExpPolicy {
    fn default() -> Self {
        ExpPolicy::UniformRandom
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ExpPolicy {
    /// Exact action distribution `[P(market), P(limit), P(hold)]`.
    pub fn distribution(&self, state: &ExpAgentState) -> [f64; 3] {
        if state.remaining_frac <= 0.0 {
            return [0.0, 0.0, 1.0];
        }
        match self {
            ExpPolicy::Aggressive => [0.0, 1.0, 0.0],
            ExpPolicy::UniformRandom => [1.0 / 3.0; 3],
            ExpPolicy::EpsMarket { eps } => [*eps, 1.0 - eps, 0.0],
            ExpPolicy::Logistic { bias, weights } => {
                let z = bias + weights.iter().zip(state.features()).map(|(w, x)| w * x).sum::<f64>();
                let p = sigmoid(z);
                [p, 1.0 - p, 0.0]
            }
            ExpPolicy::AlwaysHold => [0.0, 0.0, 1.0],
        }
    }

    /// Probability of placing a market order in `state`.
    pub fn propensity(&self, state: &ExpAgentState) -> f64 {
        self.distribution(state)[0]
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &ExpAgentState, rng: &mut R) -> ExpAction {
        let dist = self.distribution(state);
        // deterministic policies consume no randomness
        if let Some(i) = dist.iter().position(|&p| p == 1.0) {
            return ExpAction::ALL[i];
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in ExpAction::ALL.iter().zip(dist) {
            acc += p;
            if u < acc {
                return *a;
            }
        }
        ExpAction::Hold
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            ExpPolicy::EpsMarket { eps } if !(0.0..=1.0).contains(eps) => Err(format!("eps {eps} outside [0, 1]")),
            ExpPolicy::Logistic { bias, weights } if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) => {
                Err("logistic policy parameters must be finite".into())
            }
            _ => Ok(()),
        }
    }
}

/// Aggressive rule as a free function: limit orders while anything remains.
pub fn exp_act_aggressive(state: &ExpAgentState) -> ExpAction {
    if state.remaining_frac > 0.0 {
        ExpAction::Limit
    } else {
        ExpAction::Hold
    }
}
