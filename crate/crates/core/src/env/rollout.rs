//! Rollout records and their JSON-lines log format.
//!
//! A log holds any number of rollouts. Each starts with a header record
//! followed by one record per execution-agent step.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::agents::{Archetype, ExpAction, ExpAgentState, WorldAction, WorldState};
use crate::lob::{AgentId, OrderRequest, StylizedFacts, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvTag {
    Real,
    World,
}

/// One background wake-up between two execution-agent actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgInteraction {
    pub agent: AgentId,
    /// `None` for the world agent.
    pub archetype: Option<Archetype>,
    /// Observation of a world decision, when states are recorded.
    pub state: Option<WorldState>,
    pub action: Option<WorldAction>,
    /// The order that reached the book, if any.
    pub order: Option<OrderRequest>,
}

impl BgInteraction {
    pub fn is_world(&self) -> bool {
        self.archetype.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpStep {
    /// 1-based step index.
    pub t: usize,
    pub s_prev: ExpAgentState,
    pub a: ExpAction,
    /// Reward of the step, including fills of resting child orders during
    /// background wake-ups and, on the last step, the terminal penalty.
    pub reward: f64,
    pub bg_interactions: Vec<BgInteraction>,
    pub facts_after: StylizedFacts,
    /// Shares still to buy after the step.
    pub remaining_after: Volume,
}

impl ExpStep {
    pub fn tau(&self) -> usize {
        self.bg_interactions.len()
    }

    pub fn world_decisions(&self) -> impl Iterator<Item = &BgInteraction> {
        self.bg_interactions.iter().filter(|b| b.is_world())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub seed: u64,
    pub horizon: usize,
    pub env_kind: EnvTag,
    /// Mid price in ticks when the scenario started.
    pub start_mid: f64,
    pub parent_volume: Volume,
    pub complete: bool,
    pub steps: Vec<ExpStep>,
}

impl Rollout {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn remaining(&self) -> Volume {
        self.steps.last().map_or(self.parent_volume, |s| s.remaining_after)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header {
        seed: u64,
        horizon: usize,
        env_kind: EnvTag,
        start_mid: f64,
        parent_volume: Volume,
        complete: bool,
        n_steps: usize,
    },
    Step(ExpStep),
}

pub fn write_rollouts<W: Write>(mut out: W, rollouts: &[Rollout]) -> Result<(), EnvError> {
    let mut line = |rec: &Record| -> Result<(), EnvError> {
        serde_json::to_writer(&mut out, rec).map_err(|e| EnvError::Log(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(())
    };
    for r in rollouts {
        line(&Record::Header {
            seed: r.seed,
            horizon: r.horizon,
            env_kind: r.env_kind,
            start_mid: r.start_mid,
            parent_volume: r.parent_volume,
            complete: r.complete,
            n_steps: r.steps.len(),
        })?;
        for s in &r.steps {
            line(&Record::Step(s.clone()))?;
        }
    }
    Ok(())
}

pub fn read_rollouts<R: BufRead>(input: R) -> Result<Vec<Rollout>, EnvError> {
    let mut out: Vec<(Rollout, usize)> = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| EnvError::Log(format!("line {}: {e}", no + 1)))?;
        match rec {
            Record::Header { seed, horizon, env_kind, start_mid, parent_volume, complete, n_steps } => {
                let r = Rollout { seed, horizon, env_kind, start_mid, parent_volume, complete, steps: Vec::new() };
                out.push((r, n_steps));
            }
            Record::Step(s) => match out.last_mut() {
                Some((r, _)) => r.steps.push(s),
                None => return Err(EnvError::Log(format!("line {}: step before any header", no + 1))),
            },
        }
    }
    out.into_iter()
        .map(|(r, n)| {
            if r.steps.len() == n {
                Ok(r)
            } else {
                Err(EnvError::Log(format!("rollout {} declares {n} steps, found {}", r.seed, r.steps.len())))
            }
        })
        .collect()
}
