//! Per-rollout feedback scalars: the episode reward and the effect of a
//! market order on the next market state, with naive or inverse
//! probability weighted estimators.

mod propensity;
pub mod synthetic;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{ExpAgentState, ExpPolicy};
use crate::csvio::{fmt_f64, reader, writer_with_meta};
use crate::env::{ExpStep, Rollout};
use crate::lob::LevelCount;

pub use propensity::{fit_propensity, LogisticModel, PropensityFit};

pub const DEFAULT_PS_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeedbackError {
    #[error("rollout is incomplete")]
    IncompleteRollout,
    #[error("no treated steps")]
    NoTreatedSteps,
    #[error("propensity {0} at a treated step")]
    DegeneratePropensity(f64),
    #[error("propensity fit needs both treated and untreated samples")]
    Separable,
    #[error("ps_threshold {0} outside (0, 0.5]")]
    BadThreshold(f64),
    #[error("feedback csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    EpisodeReward,
    Mkt2NextReturn,
    Mkt2NextPriceImpact,
    Mkt2NextSpread,
    Mkt2NextImbalance(LevelCount),
    Mkt2NextDirection,
    Mkt2Reward,
}

impl FeedbackKind {
    pub fn name(&self) -> String {
        match self {
            FeedbackKind::EpisodeReward => "EpisodeReward".into(),
            FeedbackKind::Mkt2NextReturn => "Mkt2NextReturn".into(),
            FeedbackKind::Mkt2NextPriceImpact => "Mkt2NextPriceImpact".into(),
            FeedbackKind::Mkt2NextSpread => "Mkt2NextSpread".into(),
            FeedbackKind::Mkt2NextImbalance(n) => format!("Mkt2NextImbalance{n}"),
            FeedbackKind::Mkt2NextDirection => "Mkt2NextDirection".into(),
            FeedbackKind::Mkt2Reward => "Mkt2Reward".into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "EpisodeReward" => FeedbackKind::EpisodeReward,
            "Mkt2NextReturn" => FeedbackKind::Mkt2NextReturn,
            "Mkt2NextPriceImpact" => FeedbackKind::Mkt2NextPriceImpact,
            "Mkt2NextSpread" => FeedbackKind::Mkt2NextSpread,
            "Mkt2NextDirection" => FeedbackKind::Mkt2NextDirection,
            "Mkt2Reward" => FeedbackKind::Mkt2Reward,
            other => {
                let n = other.strip_prefix("Mkt2NextImbalance")?;
                let n = serde_json::from_str(&format!("\"{n}\"")).ok()?;
                FeedbackKind::Mkt2NextImbalance(n)
            }
        })
    }

    pub fn is_causal(&self) -> bool {
        *self != FeedbackKind::EpisodeReward
    }

    /// Outcome of a step for causal kinds; `None` when the market part of
    /// the next state is unavailable.
    pub fn outcome(&self, step: &ExpStep) -> Option<f64> {
        let f = &step.facts_after;
        match self {
            FeedbackKind::EpisodeReward => None,
            FeedbackKind::Mkt2NextReturn => f.log_return,
            FeedbackKind::Mkt2NextPriceImpact => f.price_impact,
            FeedbackKind::Mkt2NextSpread => f.spread.map(|s| s as f64),
            FeedbackKind::Mkt2NextImbalance(n) => f.mid.and(f.imbalance(*n)),
            FeedbackKind::Mkt2NextDirection => f.mid.map(|_| f.direction as f64),
            FeedbackKind::Mkt2Reward => Some(step.reward),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Naive,
    Ipw,
}

/// How the weighted sum of an IPW estimate is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpwNormalization {
    /// `(1/n_treated) * sum(y / e)`.
    AsPrinted,
    /// `(1/n) * sum(y / e)` over all `n` steps with a defined outcome.
    Horizon,
    /// `sum(y / e) / sum(1 / e)`.
    #[default]
    SelfNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySource {
    /// The execution policy's own action probabilities.
    #[default]
    Exact,
    /// Logistic regression fitted on the pooled rollouts.
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackSpec {
    pub kind: FeedbackKind,
    pub estimator: Estimator,
    pub ps_threshold: f64,
    pub normalization: IpwNormalization,
    pub propensity: PropensitySource,
}

impl Default for FeedbackSpec {
    fn default() -> Self {
        Self {
            kind: FeedbackKind::Mkt2NextReturn,
            estimator: Estimator::Ipw,
            ps_threshold: DEFAULT_PS_THRESHOLD,
            normalization: IpwNormalization::default(),
            propensity: PropensitySource::default(),
        }
    }
}

impl FeedbackSpec {
    pub fn new(kind: FeedbackKind) -> Self {
        Self { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), FeedbackError> {
        if !(self.ps_threshold > 0.0 && self.ps_threshold <= 0.5) {
            return Err(FeedbackError::BadThreshold(self.ps_threshold));
        }
        Ok(())
    }

    /// Label used in CSV files: naive for the reward kind, which has no
    /// estimator.
    pub fn estimator_label(&self) -> &'static str {
        match (self.kind.is_causal(), self.estimator) {
            (false, _) | (true, Estimator::Naive) => "naive",
            (true, Estimator::Ipw) => "ipw",
        }
    }
}

/// One step seen by a causal estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obs {
    pub treated: bool,
    pub outcome: f64,
    /// Probability of treatment given the previous state.
    pub propensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSample {
    pub value: f64,
    pub n_treated: usize,
    pub seed: u64,
}

/// Mean outcome over treated steps.
pub fn naive_estimate(obs: &[Obs]) -> Result<(f64, usize), FeedbackError> {
    let treated: Vec<f64> = obs.iter().filter(|o| o.treated).map(|o| o.outcome).collect();
    if treated.is_empty() {
        return Err(FeedbackError::NoTreatedSteps);
    }
    Ok((treated.iter().sum::<f64>() / treated.len() as f64, treated.len()))
}

/// Inverse probability weighted mean outcome under treatment, with the
/// propensity clipped from below at `threshold`.
pub fn ipw_estimate(obs: &[Obs], threshold: f64, norm: IpwNormalization) -> Result<(f64, usize), FeedbackError> {
    let mut weighted = 0.0;
    let mut weights = 0.0;
    let mut n_treated = 0;
    for o in obs.iter().filter(|o| o.treated) {
        if !(o.propensity > 0.0) {
            return Err(FeedbackError::DegeneratePropensity(o.propensity));
        }
        let e = o.propensity.max(threshold);
        weighted += o.outcome / e;
        weights += 1.0 / e;
        n_treated += 1;
    }
    if n_treated == 0 {
        return Err(FeedbackError::NoTreatedSteps);
    }
    let value = match norm {
        IpwNormalization::AsPrinted => weighted / n_treated as f64,
        IpwNormalization::Horizon => weighted / obs.len() as f64,
        IpwNormalization::SelfNormalized => weighted / weights,
    };
    Ok((value, n_treated))
}

/// Sum of step rewards, terminal penalty included.
pub fn episode_reward(rollout: &Rollout) -> Result<FeedbackSample, FeedbackError> {
    if !rollout.complete {
        return Err(FeedbackError::IncompleteRollout);
    }
    Ok(FeedbackSample {
        value: rollout.total_reward(),
        n_treated: rollout.steps.iter().filter(|s| s.a.is_treated()).count(),
        seed: rollout.seed,
    })
}

/// Causal observations of a rollout; steps without a defined outcome are
/// skipped.
pub fn observations<F: Fn(&ExpAgentState) -> f64>(rollout: &Rollout, kind: FeedbackKind, propensity: F) -> Vec<Obs> {
    rollout
        .steps
        .iter()
        .filter_map(|s| {
            kind.outcome(s)
                .map(|outcome| Obs { treated: s.a.is_treated(), outcome, propensity: propensity(&s.s_prev) })
        })
        .collect()
}

pub fn naive_effect(rollout: &Rollout, kind: FeedbackKind) -> Result<FeedbackSample, FeedbackError> {
    let (value, n_treated) = naive_estimate(&observations(rollout, kind, |_| 1.0))?;
    Ok(FeedbackSample { value, n_treated, seed: rollout.seed })
}

pub fn ipw_effect<F: Fn(&ExpAgentState) -> f64>(
    rollout: &Rollout,
    kind: FeedbackKind,
    propensity: F,
    threshold: f64,
    norm: IpwNormalization,
) -> Result<FeedbackSample, FeedbackError> {
    let (value, n_treated) = ipw_estimate(&observations(rollout, kind, propensity), threshold, norm)?;
    Ok(FeedbackSample { value, n_treated, seed: rollout.seed })
}

/// Effect of a market order on the immediate reward.
pub fn mkt_to_reward<F: Fn(&ExpAgentState) -> f64>(
    rollout: &Rollout,
    spec: &FeedbackSpec,
    propensity: F,
) -> Result<FeedbackSample, FeedbackError> {
    let spec = FeedbackSpec { kind: FeedbackKind::Mkt2Reward, ..spec.clone() };
    feedback(rollout, &spec, propensity)
}

/// Feedback of one rollout under `spec`.
pub fn feedback<F: Fn(&ExpAgentState) -> f64>(
    rollout: &Rollout,
    spec: &FeedbackSpec,
    propensity: F,
) -> Result<FeedbackSample, FeedbackError> {
    match (spec.kind, spec.estimator) {
        (FeedbackKind::EpisodeReward, _) => episode_reward(rollout),
        (kind, Estimator::Naive) => naive_effect(rollout, kind),
        (kind, Estimator::Ipw) => ipw_effect(rollout, kind, propensity, spec.ps_threshold, spec.normalization),
    }
}

/// Feedbacks of a rollout set, with rollouts lacking treated steps dropped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackSet {
    pub samples: Vec<FeedbackSample>,
    pub dropped: usize,
}

impl FeedbackSet {
    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }
}

/// Compute the feedback of every rollout. With fitted propensities the
/// model is fitted once on all steps of all rollouts.
pub fn collect_feedback(rollouts: &[Rollout], spec: &FeedbackSpec, policy: &ExpPolicy) -> Result<FeedbackSet, FeedbackError> {
    spec.validate()?;
    let fitted = match (spec.kind.is_causal(), spec.estimator, spec.propensity) {
        (true, Estimator::Ipw, PropensitySource::Fitted) => {
            let history: Vec<(ExpAgentState, bool)> = rollouts
                .iter()
                .flat_map(|r| r.steps.iter().filter(|s| s.s_prev.remaining_frac > 0.0).map(|s| (s.s_prev, s.a.is_treated())))
                .collect();
            Some(fit_propensity(&history)?.model)
        }
        _ => None,
    };
    let mut out = FeedbackSet::default();
    for r in rollouts {
        let res = match &fitted {
            Some(m) => feedback(r, spec, |s| m.predict(s)),
            None => feedback(r, spec, |s| policy.propensity(s)),
        };
        match res {
            Ok(s) => out.samples.push(s),
            Err(FeedbackError::NoTreatedSteps) => out.dropped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub const CSV_HEADER: [&str; 5] = ["kind", "estimator", "value", "n_treated", "seed"];

pub fn write_feedback_csv<W: Write>(out: W, seed: u64, spec: &FeedbackSpec, set: &FeedbackSet) -> std::io::Result<()> {
    let mut w = writer_with_meta(out, seed)?;
    w.write_record(CSV_HEADER)?;
    let kind = spec.kind.name();
    for s in &set.samples {
        w.write_record([
            kind.as_str(),
            spec.estimator_label(),
            &fmt_f64(s.value),
            &s.n_treated.to_string(),
            &s.seed.to_string(),
        ])?;
    }
    w.flush()
}

/// Read a feedback CSV back as `(kind, estimator, sample)` rows.
pub fn read_feedback_csv<R: Read>(input: R) -> Result<Vec<(String, String, FeedbackSample)>, FeedbackError> {
    let err = |e: String| FeedbackError::Csv(e);
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(err(format!("unexpected header {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| err(format!("{}: {e}", &rec[i])));
        let value = num(2)?;
        let n_treated = rec[3].parse().map_err(|e| err(format!("n_treated: {e}")))?;
        let seed = rec[4].parse().map_err(|e| err(format!("seed: {e}")))?;
        rows.push((rec[0].to_string(), rec[1].to_string(), FeedbackSample { value, n_treated, seed }));
    }
    Ok(rows)
}
