//! The trainable world background agent.
//!
//! A two-layer tanh perceptron maps the observed market state to five
//! categorical heads (kind, side, price offset, size bucket, cancel slot).
//! An action only draws on the heads relevant to its kind, so the density is
//! a product of at most four categoricals and both the log-density and its
//! gradient are exact.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::lob::{Side, Volume};
use crate::stats::log_sum_exp;

/// Observation of the world agent at one wake-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub features: Vec<f64>,
    /// How many of the agent's own resting orders can be cancelled. Not part
    /// of the network input; it only masks the cancel kind and slots.
    pub cancel_slots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorldKind {
    Limit = 0,
    Market = 1,
    Cancel = 2,
    Hold = 3,
}

impl WorldKind {
    pub const ALL: [WorldKind; 4] = [WorldKind::Limit, WorldKind::Market, WorldKind::Cancel, WorldKind::Hold];
}

/// A world-agent action. Fields irrelevant to `kind` are zero (side `Bid`) so
/// each action has exactly one encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorldAction {
    pub kind: WorldKind,
    pub side: Side,
    /// Ticks from the mid reference, limit orders only.
    pub price_offset: i64,
    pub size_bucket: usize,
    pub cancel_slot: usize,
}

impl WorldAction {
    pub fn hold() -> Self {
        Self { kind: WorldKind::Hold, side: Side::Bid, price_offset: 0, size_bucket: 0, cancel_slot: 0 }
    }

    pub fn limit(side: Side, price_offset: i64, size_bucket: usize) -> Self {
        Self { kind: WorldKind::Limit, side, price_offset, size_bucket, cancel_slot: 0 }
    }

    pub fn market(side: Side, size_bucket: usize) -> Self {
        Self { kind: WorldKind::Market, side, price_offset: 0, size_bucket, cancel_slot: 0 }
    }

    pub fn cancel(slot: usize) -> Self {
        Self { kind: WorldKind::Cancel, side: Side::Bid, price_offset: 0, size_bucket: 0, cancel_slot: slot }
    }

    pub fn canonical(self) -> Self {
        match self.kind {
            WorldKind::Limit => Self::limit(self.side, self.price_offset, self.size_bucket),
            WorldKind::Market => Self::market(self.side, self.size_bucket),
            WorldKind::Cancel => Self::cancel(self.cancel_slot),
            WorldKind::Hold => Self::hold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyArch {
    pub input_dim: usize,
    pub hidden: usize,
    /// Limit prices range over `[-max_offset, max_offset]` ticks.
    pub max_offset: i64,
    pub size_grid: Vec<Volume>,
    pub cancel_slots: usize,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self {
            input_dim: super::observe::FEATURE_DIM,
            hidden: 16,
            max_offset: 3,
            size_grid: vec![10, 20, 50],
            cancel_slots: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Head {
    Kind = 0,
    Side = 1,
    Price = 2,
    Size = 3,
    Slot = 4,
}

impl PolicyArch {
    fn head_sizes(&self) -> [usize; 5] {
        [4, 2, (2 * self.max_offset + 1) as usize, self.size_grid.len(), self.cancel_slots]
    }

    pub fn param_count(&self) -> usize {
        let first = self.hidden * self.input_dim + self.hidden;
        first + self.head_sizes().iter().map(|n| n * self.hidden + n).sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.input_dim == 0 || self.hidden == 0 {
            return Err("policy dimensions must be positive".into());
        }
        if self.max_offset < 0 || self.size_grid.is_empty() || self.size_grid.contains(&0) {
            return Err("policy needs max_offset >= 0 and a positive size grid".into());
        }
        if self.cancel_slots == 0 {
            return Err("policy needs at least one cancel slot".into());
        }
        Ok(())
    }

    /// Offset of each block in the flat parameter vector.
    fn layout(&self) -> Layout {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input_dim;
        let mut off = b1 + self.hidden;
        let mut heads = [(0, 0, 0); 5];
        for (i, n) in self.head_sizes().into_iter().enumerate() {
            heads[i] = (off, off + n * self.hidden, n);
            off += n * self.hidden + n;
        }
        Layout { b1, heads }
    }
}

struct Layout {
    b1: usize,
    /// (weights offset, bias offset, size) per head.
    heads: [(usize, usize, usize); 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldPolicy {
    pub arch: PolicyArch,
    pub theta: Vec<f64>,
}

/// Hidden activations and per-head logits for one state.
struct Forward {
    hidden: Vec<f64>,
    logits: [Vec<f64>; 5],
}

/// Log-probabilities of a head restricted to its first `allowed` entries
/// (or with entry `masked` removed for the kind head).
fn masked_log_softmax(logits: &[f64], allowed: &[bool]) -> Vec<f64> {
    let live: Vec<f64> = logits.iter().zip(allowed).filter(|(_, a)| **a).map(|(l, _)| *l).collect();
    let lse = log_sum_exp(&live);
    logits.iter().zip(allowed).map(|(l, a)| if *a { l - lse } else { f64::NEG_INFINITY }).collect()
}

fn sample_index<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, lp) in log_probs.iter().enumerate() {
        if *lp == f64::NEG_INFINITY {
            continue;
        }
        acc += lp.exp();
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

impl WorldPolicy {
    pub fn zeros(arch: PolicyArch) -> Self {
        let n = arch.param_count();
        Self { arch, theta: vec![0.0; n] }
    }

    /// Gaussian weights with std. dev. `scale / sqrt(fan_in)`, zero biases.
    pub fn random<R: Rng + ?Sized>(arch: PolicyArch, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let lay = p.arch.layout();
        let h = p.arch.hidden;
        let d = p.arch.input_dim;
        let first = Normal::new(0.0, scale / (d as f64).sqrt()).expect("finite scale");
        for w in &mut p.theta[..lay.b1] {
            *w = first.sample(rng);
        }
        let second = Normal::new(0.0, scale / (h as f64).sqrt()).expect("finite scale");
        for (w_off, b_off, _) in lay.heads {
            for w in &mut p.theta[w_off..b_off] {
                *w = second.sample(rng);
            }
        }
        p
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Add `delta` to the bias of one category of a head. Used to build
    /// perturbed or biased policies.
    pub fn shift_bias(&mut self, kind_bias: [f64; 4], side_bias: [f64; 2]) {
        let lay = self.arch.layout();
        let (_, kb, _) = lay.heads[Head::Kind as usize];
        let (_, sb, _) = lay.heads[Head::Side as usize];
        for (i, d) in kind_bias.iter().enumerate() {
            self.theta[kb + i] += d;
        }
        for (i, d) in side_bias.iter().enumerate() {
            self.theta[sb + i] += d;
        }
    }

    fn check_state(&self, s: &WorldState) -> Result<(), AgentError> {
        if s.features.len() != self.arch.input_dim {
            return Err(AgentError::Dimension { expected: self.arch.input_dim, got: s.features.len() });
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let a = &self.arch;
        let lay = a.layout();
        let th = &self.theta;
        let hidden: Vec<f64> = (0..a.hidden)
            .map(|j| {
                let row = &th[j * a.input_dim..(j + 1) * a.input_dim];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + th[lay.b1 + j];
                z.tanh()
            })
            .collect();
        let logits = lay.heads.map(|(w_off, b_off, n)| {
            (0..n)
                .map(|k| {
                    let row = &th[w_off + k * a.hidden..w_off + (k + 1) * a.hidden];
                    row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + th[b_off + k]
                })
                .collect()
        });
        Forward { hidden, logits }
    }

    fn masks(&self, s: &WorldState) -> [Vec<bool>; 5] {
        let sizes = self.arch.head_sizes();
        let slots = s.cancel_slots.min(self.arch.cancel_slots);
        [
            WorldKind::ALL.iter().map(|k| *k != WorldKind::Cancel || slots > 0).collect(),
            vec![true; sizes[1]],
            vec![true; sizes[2]],
            vec![true; sizes[3]],
            (0..sizes[4]).map(|i| i < slots).collect(),
        ]
    }

    /// Which head categories an action uses, as (head, index) pairs.
    fn chosen(&self, act: &WorldAction) -> Result<Vec<(Head, usize)>, AgentError> {
        let a = act.canonical();
        let illegal = |why: &str| AgentError::IllegalAction(format!("{act:?}: {why}"));
        let side = match a.side {
            Side::Bid => 0,
            Side::Ask => 1,
        };
        let size = || {
            (a.size_bucket < self.arch.size_grid.len())
                .then_some(a.size_bucket)
                .ok_or_else(|| illegal("size bucket out of range"))
        };
        Ok(match a.kind {
            WorldKind::Limit => {
                if a.price_offset.abs() > self.arch.max_offset {
                    return Err(illegal("price offset out of range"));
                }
                vec![
                    (Head::Kind, 0),
                    (Head::Side, side),
                    (Head::Price, (a.price_offset + self.arch.max_offset) as usize),
                    (Head::Size, size()?),
                ]
            }
            WorldKind::Market => vec![(Head::Kind, 1), (Head::Side, side), (Head::Size, size()?)],
            WorldKind::Cancel => vec![(Head::Kind, 2), (Head::Slot, a.cancel_slot)],
            WorldKind::Hold => vec![(Head::Kind, 3)],
        })
    }

    fn log_prob_inner(&self, s: &WorldState, a: &WorldAction, fwd: &Forward) -> Result<Vec<(Head, usize, Vec<f64>)>, AgentError> {
        let masks = self.masks(s);
        let mut out = Vec::with_capacity(4);
        for (head, idx) in self.chosen(a)? {
            let lp = masked_log_softmax(&fwd.logits[head as usize], &masks[head as usize]);
            if lp.get(idx).is_none_or(|v| *v == f64::NEG_INFINITY) {
                return Err(AgentError::IllegalAction(format!("{a:?} is masked in this state")));
            }
            out.push((head, idx, lp));
        }
        Ok(out)
    }

    /// Exact log-density of a (canonicalized) action.
    pub fn log_prob(&self, s: &WorldState, a: &WorldAction) -> Result<f64, AgentError> {
        self.check_state(s)?;
        let fwd = self.forward(&s.features);
        Ok(self.log_prob_inner(s, a, &fwd)?.iter().map(|(_, i, lp)| lp[*i]).sum())
    }

    /// Log-density and its exact gradient with respect to `theta`.
    pub fn log_prob_grad(&self, s: &WorldState, a: &WorldAction) -> Result<(f64, Vec<f64>), AgentError> {
        self.check_state(s)?;
        let arch = &self.arch;
        let lay = arch.layout();
        let fwd = self.forward(&s.features);
        let used = self.log_prob_inner(s, a, &fwd)?;
        let mut grad = vec![0.0; self.theta.len()];
        let mut d_hidden = vec![0.0; arch.hidden];
        let mut total = 0.0;
        for (head, idx, lp) in &used {
            total += lp[*idx];
            let (w_off, b_off, n) = lay.heads[*head as usize];
            for k in 0..n {
                let p = if lp[k] == f64::NEG_INFINITY { 0.0 } else { lp[k].exp() };
                let g = if k == *idx { 1.0 - p } else { -p };
                if g == 0.0 {
                    continue;
                }
                grad[b_off + k] += g;
                for j in 0..arch.hidden {
                    grad[w_off + k * arch.hidden + j] += g * fwd.hidden[j];
                    d_hidden[j] += g * self.theta[w_off + k * arch.hidden + j];
                }
            }
        }
        for j in 0..arch.hidden {
            let dz = d_hidden[j] * (1.0 - fwd.hidden[j] * fwd.hidden[j]);
            if dz == 0.0 {
                continue;
            }
            grad[lay.b1 + j] += dz;
            for (i, x) in s.features.iter().enumerate() {
                grad[j * arch.input_dim + i] += dz * x;
            }
        }
        Ok((total, grad))
    }

    /// Draw one action; masked categories (cancel without resting orders,
    /// slots beyond the available ones) are renormalized away.
    pub fn sample<R: Rng + ?Sized>(&self, s: &WorldState, rng: &mut R) -> Result<WorldAction, AgentError> {
        self.check_state(s)?;
        let fwd = self.forward(&s.features);
        let masks = self.masks(s);
        let lp = |h: Head| masked_log_softmax(&fwd.logits[h as usize], &masks[h as usize]);
        let kind = WorldKind::ALL[sample_index(&lp(Head::Kind), rng)];
        let to_side = |i: usize| if i == 0 { Side::Bid } else { Side::Ask };
        Ok(match kind {
            WorldKind::Limit => {
                let side = to_side(sample_index(&lp(Head::Side), rng));
                let offset = sample_index(&lp(Head::Price), rng) as i64 - self.arch.max_offset;
                let size = sample_index(&lp(Head::Size), rng);
                WorldAction::limit(side, offset, size)
            }
            WorldKind::Market => {
                let side = to_side(sample_index(&lp(Head::Side), rng));
                WorldAction::market(side, sample_index(&lp(Head::Size), rng))
            }
            WorldKind::Cancel => WorldAction::cancel(sample_index(&lp(Head::Slot), rng)),
            WorldKind::Hold => WorldAction::hold(),
        })
    }

    /// Every canonical action that is legal in `s`.
    pub fn enumerate_actions(&self, s: &WorldState) -> Vec<WorldAction> {
        let a = &self.arch;
        let mut out = vec![WorldAction::hold()];
        for side in [Side::Bid, Side::Ask] {
            for size in 0..a.size_grid.len() {
                out.push(WorldAction::market(side, size));
                for off in -a.max_offset..=a.max_offset {
                    out.push(WorldAction::limit(side, off, size));
                }
            }
        }
        out.extend((0..s.cancel_slots.min(a.cancel_slots)).map(WorldAction::cancel));
        out
    }

    const MAGIC: &'static str = "agentsim-world-policy";
    const VERSION: u32 = 1;

    /// Binary format: one JSON header line, then `theta` as little-endian f64.
    pub fn write_to<W: Write>(&self, mut out: W, seed: u64) -> std::io::Result<()> {
        let header = serde_json::json!({
            "format": Self::MAGIC,
            "version": Self::VERSION,
            "arch": self.arch,
            "len": self.theta.len(),
            "seed": seed,
        });
        out.write_all(header.to_string().as_bytes())?;
        out.write_all(b"\n")?;
        for v in &self.theta {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<(Self, u64), AgentError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes).map_err(|e| AgentError::Format(e.to_string()))?;
        let nl = bytes.iter().position(|b| *b == b'\n').ok_or_else(|| AgentError::Format("missing header".into()))?;
        let header: serde_json::Value =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| AgentError::Format(e.to_string()))?;
        if header["format"] != Self::MAGIC || header["version"] != Self::VERSION {
            return Err(AgentError::Format(format!("unsupported policy header {header}")));
        }
        let arch: PolicyArch =
            serde_json::from_value(header["arch"].clone()).map_err(|e| AgentError::Format(e.to_string()))?;
        let len = header["len"].as_u64().ok_or_else(|| AgentError::Format("missing len".into()))? as usize;
        let seed = header["seed"].as_u64().unwrap_or(0);
        let body = &bytes[nl + 1..];
        if len != arch.param_count() || body.len() != len * 8 {
            return Err(AgentError::Format(format!("expected {len} parameters, found {} bytes", body.len())));
        }
        let theta = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok((Self { arch, theta }, seed))
    }
}
