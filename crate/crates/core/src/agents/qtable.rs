//! Tabular Q-learning for the execution agent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::exp::{ExpAction, ExpAgentState};

/// Discrete state: (elapsed bucket, remaining bucket).
pub type StateKey = (u32, u32);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub time_bins: u32,
    pub inventory_bins: u32,
}

impl Default for Discretizer {
    fn default() -> Self {
        Self { time_bins: 10, inventory_bins: 10 }
    }
}

impl Discretizer {
    pub fn key(&self, s: &ExpAgentState) -> StateKey {
        let bucket = |x: f64, n: u32| ((x.clamp(0.0, 1.0) * n as f64) as u32).min(n);
        (bucket(s.elapsed_frac, self.time_bins), bucket(s.remaining_frac, self.inventory_bins))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub alpha: f64,
    pub gamma: f64,
    /// Penalty per unfulfilled share at the horizon.
    pub penalty: f64,
    pub discretizer: Discretizer,
    values: BTreeMap<(StateKey, u8), f64>,
}

impl QTable {
    pub fn new(alpha: f64, gamma: f64, penalty: f64) -> Result<Self, String> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(format!("learning rate {alpha} outside (0, 1]"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(format!("discount {gamma} outside [0, 1]"));
        }
        Ok(Self { alpha, gamma, penalty, discretizer: Discretizer::default(), values: BTreeMap::new() })
    }

    pub fn get(&self, s: StateKey, a: ExpAction) -> f64 {
        self.values.get(&(s, a.code())).copied().unwrap_or(0.0)
    }

    pub fn max_value(&self, s: StateKey) -> f64 {
        ExpAction::ALL.iter().map(|a| self.get(s, *a)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy(&self, s: StateKey) -> ExpAction {
        let mut best = ExpAction::ALL[0];
        for a in ExpAction::ALL {
            if self.get(s, a) > self.get(s, best) {
                best = a;
            }
        }
        best
    }

    /// One temporal-difference update. `next = None` marks a terminal
    /// transition with no bootstrap term.
    pub fn q_update(&mut self, s: StateKey, a: ExpAction, reward: f64, next: Option<StateKey>) {
        let target = reward + next.map_or(0.0, |n| self.gamma * self.max_value(n));
        let q = self.get(s, a);
        self.values.insert((s, a.code()), q + self.alpha * (target - q));
    }

    /// Terminal reward for `remaining` unfilled shares.
    pub fn terminal_penalty(&self, remaining: u64) -> f64 {
        -self.penalty * remaining as f64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
