//! Experiment configuration: one JSON document with dot-path overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agents::{BgPopulationConfig, PolicyArch, WorldPolicy};
use crate::env::{EnvKind, ExpConfig, MarketConfig, ScheduleConfig, SimConfig, WorldEnvConfig};
use crate::feedback::FeedbackSpec;
use crate::metric::{DHat, KernelSpec};
use crate::seed::{self, stream};
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("override `{0}`: expected key=value")]
    OverrideSyntax(String),
    #[error("override `{key}`: no such field")]
    UnknownKey { key: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// How the world policy is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSetup {
    pub arch: PolicyArch,
    /// Weight scale of the random initialization.
    pub init_scale: f64,
    /// Added to the kind logits (limit, market, cancel, hold).
    pub kind_bias: [f64; 4],
    /// Added to the side logits (bid, ask).
    pub side_bias: [f64; 2],
    /// Load parameters from a policy file instead of initializing.
    pub policy_path: Option<PathBuf>,
    pub floor: BgPopulationConfig,
    pub decisions_per_step: usize,
}

impl Default for WorldSetup {
    fn default() -> Self {
        Self {
            arch: PolicyArch::default(),
            init_scale: 8.0,
            kind_bias: [0.0; 4],
            side_bias: [0.0; 2],
            policy_path: None,
            floor: BgPopulationConfig::empty(),
            decisions_per_step: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparabilitySetup {
    /// Rollouts per pool.
    pub pool: usize,
    pub ns: Vec<usize>,
    pub reps: usize,
}

impl Default for SeparabilitySetup {
    fn default() -> Self {
        Self { pool: 200, ns: vec![2, 3, 5, 7, 10, 20, 30, 40, 50], reps: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub market: MarketConfig,
    pub exp: ExpConfig,
    pub schedule: ScheduleConfig,
    pub real: BgPopulationConfig,
    pub world: WorldSetup,
    pub feedback: FeedbackSpec,
    pub d_hat: DHat,
    pub kernel: KernelSpec,
    pub separability: SeparabilitySetup,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            market: MarketConfig::default(),
            exp: ExpConfig::default(),
            schedule: ScheduleConfig::default(),
            real: BgPopulationConfig::default(),
            world: WorldSetup::default(),
            feedback: FeedbackSpec::default(),
            d_hat: DHat::Mmd,
            kernel: KernelSpec::default(),
            separability: SeparabilitySetup::default(),
            train: TrainConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Apply `key=value` overrides. Keys are dot paths into the JSON form;
    /// values parse as JSON and fall back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut doc = serde_json::to_value(&self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::OverrideSyntax(o.into()))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
            let mut node = &mut doc;
            for part in key.split('.') {
                node = match node {
                    Value::Object(map) => map.get_mut(part),
                    Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                    _ => None,
                }
                .ok_or_else(|| ConfigError::UnknownKey { key: key.into() })?;
            }
            *node = value;
        }
        Ok(serde_json::from_value(doc)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        self.real_sim().validate().map_err(|e| invalid(e.to_string()))?;
        self.world.arch.validate().map_err(invalid)?;
        if self.world.decisions_per_step == 0 {
            return Err(invalid("world.decisions_per_step must be positive".into()));
        }
        if !(self.world.init_scale >= 0.0 && self.world.init_scale.is_finite()) {
            return Err(invalid("world.init_scale must be finite and non-negative".into()));
        }
        self.feedback.validate().map_err(|e| invalid(e.to_string()))?;
        let sep = &self.separability;
        if sep.reps == 0 || sep.ns.iter().any(|&n| n < 2 || n > sep.pool) {
            return Err(invalid("separability needs reps > 0 and 2 <= N <= pool".into()));
        }
        self.train.validate(self.exp.horizon).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    fn sim(&self, env: EnvKind) -> SimConfig {
        SimConfig { market: self.market.clone(), exp: self.exp.clone(), schedule: self.schedule.clone(), env }
    }

    pub fn real_sim(&self) -> SimConfig {
        self.sim(EnvKind::Real(self.real.clone()))
    }

    pub fn world_sim(&self, policy: WorldPolicy) -> SimConfig {
        self.sim(EnvKind::World(WorldEnvConfig {
            policy,
            floor: self.world.floor.clone(),
            decisions_per_step: self.world.decisions_per_step,
        }))
    }

    /// The configured world policy: loaded from `policy_path`, or a random
    /// initialization seeded from the master seed, plus the logit biases.
    pub fn world_policy(&self) -> Result<WorldPolicy, ConfigError> {
        let mut policy = match &self.world.policy_path {
            Some(path) => {
                let file = fs::File::open(path).map_err(|source| ConfigError::Read { path: path.clone(), source })?;
                WorldPolicy::read_from(std::io::BufReader::new(file)).map_err(|e| ConfigError::Invalid(e.to_string()))?.0
            }
            None => {
                let mut rng = seed::rng(seed::derive(self.seed, &[stream::INIT]));
                WorldPolicy::random(self.world.arch.clone(), self.world.init_scale, &mut rng)
            }
        };
        policy.shift_bias(self.world.kind_bias, self.world.side_bias);
        Ok(policy)
    }
}
