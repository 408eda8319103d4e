//! A small confounded decision process with a known treatment effect.
//!
//! The state follows a stationary AR(1) process independent of the actions.
//! The agent treats with probability `sigmoid(gamma * x)` and the outcome is
//! `rho * x + beta * a + noise`, so the state drives both the treatment and
//! the outcome. The mean outcome under treatment is `beta`, and a run with
//! randomized actions recovers it without bias.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ipw_estimate, naive_estimate, FeedbackError, IpwNormalization, Obs};
use crate::agents::exp::sigmoid;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfoundedMdp {
    pub horizon: usize,
    /// AR(1) coefficient of the state.
    pub phi: f64,
    /// State sensitivity of the treatment logit.
    pub gamma: f64,
    /// State effect on the outcome.
    pub rho: f64,
    /// Treatment effect on the outcome.
    pub beta: f64,
    pub noise: f64,
}

impl Default for ConfoundedMdp {
    fn default() -> Self {
        Self { horizon: 10, phi: 0.5, gamma: 2.0, rho: 1.0, beta: 0.5, noise: 0.5 }
    }
}

/// Who picks the actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behavior {
    /// `P(a = 1 | x) = sigmoid(gamma * x)`.
    Confounded,
    /// Actions independent of the state.
    Randomized(f64),
}

impl ConfoundedMdp {
    pub fn propensity(&self, x: f64, behavior: Behavior) -> f64 {
        match behavior {
            Behavior::Confounded => sigmoid(self.gamma * x),
            Behavior::Randomized(p) => p,
        }
    }

    /// One rollout as estimator observations carrying exact propensities.
    pub fn rollout<R: Rng + ?Sized>(&self, behavior: Behavior, rng: &mut R) -> Vec<Obs> {
        let innovation = (1.0 - self.phi * self.phi).sqrt();
        let mut x: f64 = StandardNormal.sample(rng);
        (0..self.horizon)
            .map(|_| {
                let e = self.propensity(x, behavior);
                let treated = rng.random_bool(e);
                let eps: f64 = StandardNormal.sample(rng);
                let outcome = self.rho * x + if treated { self.beta } else { 0.0 } + self.noise * eps;
                let eta: f64 = StandardNormal.sample(rng);
                let obs = Obs { treated, outcome, propensity: e };
                x = self.phi * x + innovation * eta;
                obs
            })
            .collect()
    }
}

/// Batch-mean estimates of one seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticEstimates {
    pub naive: f64,
    pub ipw: f64,
    pub dropped: usize,
}

/// Mean of per-rollout naive and IPW feedbacks over `rollouts` rollouts.
pub fn estimate_batch(
    mdp: &ConfoundedMdp,
    behavior: Behavior,
    rollouts: usize,
    threshold: f64,
    norm: IpwNormalization,
    seed: u64,
) -> Result<SyntheticEstimates, FeedbackError> {
    let mut rng = seed::rng(seed);
    let (mut naive, mut ipw, mut kept, mut dropped) = (0.0, 0.0, 0usize, 0usize);
    for _ in 0..rollouts {
        let obs = mdp.rollout(behavior, &mut rng);
        match (naive_estimate(&obs), ipw_estimate(&obs, threshold, norm)) {
            (Ok((n, _)), Ok((i, _))) => {
                naive += n;
                ipw += i;
                kept += 1;
            }
            (Err(FeedbackError::NoTreatedSteps), _) => dropped += 1,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    if kept == 0 {
        return Err(FeedbackError::NoTreatedSteps);
    }
    Ok(SyntheticEstimates { naive: naive / kept as f64, ipw: ipw / kept as f64, dropped })
}

/// Ground truth from a randomized-action run: the naive estimate is
/// unbiased once actions ignore the state.
pub fn randomized_truth(mdp: &ConfoundedMdp, rollouts: usize, seed: u64) -> Result<f64, FeedbackError> {
    estimate_batch(mdp, Behavior::Randomized(0.5), rollouts, 0.5, IpwNormalization::SelfNormalized, seed).map(|e| e.naive)
}
