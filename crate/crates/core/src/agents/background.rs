//! Parametric background agents standing in for the "real" market.
//!
//! Each agent wakes up, looks at the book and returns at most one order.
//! Buy prices are referenced to `floor(mid)` and sell prices to `ceil(mid)`
//! so that an offset of zero quotes at the mid when it is a whole tick.

use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::lob::{AgentId, Book, OrderId, OrderRequest, Price, Side, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Noise,
    Momentum,
    Value,
    MarketMaker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Limit prices are drawn uniformly within this many ticks of the mid.
    pub max_offset: i64,
    pub sizes: Vec<Volume>,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { max_offset: 3, sizes: vec![10, 20, 50] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueParams {
    /// Act when the observed fundamental is this many ticks away from mid.
    pub threshold: f64,
    /// Std. dev. of each agent's private observation of the fundamental.
    pub observation_noise: f64,
    pub size: Volume,
}

impl Default for ValueParams {
    fn default() -> Self {
        Self { threshold: 2.0, observation_noise: 1.0, size: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MomentumParams {
    pub short_window: usize,
    pub long_window: usize,
    pub size: Volume,
}

impl Default for MomentumParams {
    fn default() -> Self {
        Self { short_window: 2, long_window: 5, size: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketMakerParams {
    /// Quotes sit this many ticks outside the mid reference on each side.
    pub half_width: i64,
    pub size: Volume,
}

impl Default for MarketMakerParams {
    fn default() -> Self {
        Self { half_width: 1, size: 50 }
    }
}

/// Mean-reverting fundamental value observed by value agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FundamentalParams {
    /// Per-step mean-reversion rate towards the scenario's initial mid.
    pub kappa: f64,
    /// Per-step shock std. dev. in ticks.
    pub sigma: f64,
}

impl Default for FundamentalParams {
    fn default() -> Self {
        Self { kappa: 0.05, sigma: 2.0 }
    }
}

impl FundamentalParams {
    /// One Ornstein-Uhlenbeck step.
    pub fn step<R: Rng + ?Sized>(&self, value: f64, mean: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        value + self.kappa * (mean - value) + self.sigma * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BgPopulationConfig {
    pub noise: usize,
    pub momentum: usize,
    pub value: usize,
    pub market_maker: usize,
    pub noise_params: NoiseParams,
    pub momentum_params: MomentumParams,
    pub value_params: ValueParams,
    pub market_maker_params: MarketMakerParams,
    pub fundamental: FundamentalParams,
}

impl Default for BgPopulationConfig {
    /// Desk-scale population: roughly the usual 1/50 scaling of a full
    /// agent-based market.
    fn default() -> Self {
        Self {
            noise: 100,
            momentum: 1,
            value: 2,
            market_maker: 1,
            noise_params: NoiseParams::default(),
            momentum_params: MomentumParams::default(),
            value_params: ValueParams::default(),
            market_maker_params: MarketMakerParams::default(),
            fundamental: FundamentalParams::default(),
        }
    }
}

impl BgPopulationConfig {
    pub fn empty() -> Self {
        Self { noise: 0, momentum: 0, value: 0, market_maker: 0, ..Default::default() }
    }

    pub fn total(&self) -> usize {
        self.noise + self.momentum + self.value + self.market_maker
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.noise_params.sizes.is_empty() || self.noise_params.sizes.contains(&0) {
            return Err("noise sizes must be non-empty and positive".into());
        }
        if self.noise_params.max_offset < 0 {
            return Err("noise max_offset must be non-negative".into());
        }
        let m = &self.momentum_params;
        if m.short_window == 0 || m.short_window >= m.long_window {
            return Err("momentum windows must satisfy 0 < short < long".into());
        }
        if self.value_params.size == 0 || m.size == 0 || self.market_maker_params.size == 0 {
            return Err("agent order sizes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.fundamental.kappa) || self.fundamental.sigma < 0.0 {
            return Err("fundamental kappa must be in [0,1] and sigma >= 0".into());
        }
        Ok(())
    }

    /// Instantiate agents with consecutive ids starting at `first_id`, market
    /// makers first so their quotes exist before noise traders arrive.
    pub fn spawn(&self, first_id: AgentId) -> Vec<BgAgent> {
        let kinds = std::iter::repeat_n(Archetype::MarketMaker, self.market_maker)
            .chain(std::iter::repeat_n(Archetype::Value, self.value))
            .chain(std::iter::repeat_n(Archetype::Momentum, self.momentum))
            .chain(std::iter::repeat_n(Archetype::Noise, self.noise));
        kinds
            .enumerate()
            .map(|(i, archetype)| BgAgent::new(first_id + i as AgentId, archetype))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgentMemory {
    None,
    MidHistory(VecDeque<f64>),
    Quotes { bid: Option<OrderId>, ask: Option<OrderId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgAgent {
    pub id: AgentId,
    pub archetype: Archetype,
    pub memory: AgentMemory,
}

/// What a background agent is allowed to see at wake-up.
#[derive(Debug, Clone, Copy)]
pub struct MarketView<'a> {
    pub book: &'a Book,
    /// Current mid, or the last known one when a side is empty.
    pub mid: f64,
    pub fundamental: f64,
}

impl MarketView<'_> {
    pub fn reference(&self, side: Side) -> Price {
        match side {
            Side::Bid => self.mid.floor() as Price,
            Side::Ask => self.mid.ceil() as Price,
        }
    }
}

/// One noise-trader draw, separated out so the rule can be exercised with
/// forced values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseDraw {
    pub side: Side,
    pub offset: i64,
    pub size: Volume,
}

impl NoiseDraw {
    pub fn sample<R: Rng + ?Sized>(params: &NoiseParams, rng: &mut R) -> Self {
        let side = if rng.random_bool(0.5) { Side::Bid } else { Side::Ask };
        let offset = rng.random_range(-params.max_offset..=params.max_offset);
        let size = *params.sizes.choose(rng).expect("sizes validated non-empty");
        Self { side, offset, size }
    }

    pub fn order(self, owner: AgentId, view: &MarketView) -> OrderRequest {
        let price = (view.reference(self.side) + self.offset).max(1);
        OrderRequest::limit(owner, self.side, price, self.size)
    }
}

/// Value-agent rule given its (possibly noisy) fundamental observation.
pub fn value_rule(owner: AgentId, observed: f64, view: &MarketView, params: &ValueParams) -> Option<OrderRequest> {
    let gap = observed - view.mid;
    let side = if gap > params.threshold {
        Side::Bid
    } else if gap < -params.threshold {
        Side::Ask
    } else {
        return None;
    };
    Some(OrderRequest::limit(owner, side, view.reference(side), params.size))
}

/// Moving-average crossover; `None` until the long window is full or on a tie.
pub fn momentum_rule(owner: AgentId, history: &VecDeque<f64>, params: &MomentumParams) -> Option<OrderRequest> {
    if history.len() < params.long_window {
        return None;
    }
    let avg = |n: usize| history.iter().rev().take(n).sum::<f64>() / n as f64;
    let short = avg(params.short_window);
    let long = avg(params.long_window);
    let side = if short > long {
        Side::Bid
    } else if short < long {
        Side::Ask
    } else {
        return None;
    };
    Some(OrderRequest::market(owner, side, params.size))
}

impl BgAgent {
    pub fn new(id: AgentId, archetype: Archetype) -> Self {
        let memory = match archetype {
            Archetype::Momentum => AgentMemory::MidHistory(VecDeque::new()),
            Archetype::MarketMaker => AgentMemory::Quotes { bid: None, ask: None },
            Archetype::Noise | Archetype::Value => AgentMemory::None,
        };
        Self { id, archetype, memory }
    }

    /// One wake-up. Returns at most one order.
    pub fn act<R: Rng + ?Sized>(
        &mut self,
        view: &MarketView,
        cfg: &BgPopulationConfig,
        rng: &mut R,
    ) -> Option<OrderRequest> {
        match self.archetype {
            Archetype::Noise => Some(NoiseDraw::sample(&cfg.noise_params, rng).order(self.id, view)),
            Archetype::Value => {
                let z: f64 = StandardNormal.sample(rng);
                let observed = view.fundamental + cfg.value_params.observation_noise * z;
                value_rule(self.id, observed, view, &cfg.value_params)
            }
            Archetype::Momentum => {
                let AgentMemory::MidHistory(history) = &mut self.memory else { unreachable!() };
                history.push_back(view.mid);
                while history.len() > cfg.momentum_params.long_window {
                    history.pop_front();
                }
                momentum_rule(self.id, history, &cfg.momentum_params)
            }
            Archetype::MarketMaker => self.quote(view, &cfg.market_maker_params),
        }
    }

    fn quote(&mut self, view: &MarketView, params: &MarketMakerParams) -> Option<OrderRequest> {
        let AgentMemory::Quotes { bid, ask } = &self.memory else { unreachable!() };
        for (side, slot) in [(Side::Bid, *bid), (Side::Ask, *ask)] {
            let target = match side {
                Side::Bid => view.reference(Side::Bid) - params.half_width,
                Side::Ask => view.reference(Side::Ask) + params.half_width,
            }
            .max(1);
            match slot.and_then(|id| view.book.order(id)) {
                None => return Some(OrderRequest::limit(self.id, side, target, params.size)),
                Some(o) if o.price != target => {
                    return Some(OrderRequest::replace(self.id, side, o.id, target, params.size))
                }
                Some(_) => {}
            }
        }
        None
    }

    /// Let the agent learn the id the book assigned to its last order.
    pub fn on_accepted(&mut self, req: &OrderRequest, id: Option<OrderId>) {
        if let AgentMemory::Quotes { bid, ask } = &mut self.memory {
            match req.side {
                Side::Bid => *bid = id,
                Side::Ask => *ask = id,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lob::{worked_example_book, OrderKind};
    use crate::seed;

    fn view(book: &Book, fundamental: f64) -> MarketView<'_> {
        MarketView { book, mid: book.mid().unwrap(), fundamental }
    }

    #[test]
    fn forced_noise_draw_places_below_mid() {
        let b = worked_example_book(); // mid 93
        let order = NoiseDraw { side: Side::Bid, offset: -1, size: 10 }.order(5, &view(&b, 93.0));
        assert_eq!(order, OrderRequest::limit(5, Side::Bid, 92, 10));
    }

    #[test]
    fn momentum_tie_holds() {
        let params = MomentumParams::default();
        let flat: VecDeque<f64> = [93.0; 5].into_iter().collect();
        assert_eq!(momentum_rule(1, &flat, &params), None);
        let rising: VecDeque<f64> = [90.0, 91.0, 92.0, 93.0, 94.0].into_iter().collect();
        assert_eq!(momentum_rule(1, &rising, &params).unwrap().side, Side::Bid);
        let short: VecDeque<f64> = [90.0, 91.0].into_iter().collect();
        assert_eq!(momentum_rule(1, &short, &params), None);
    }

    #[test]
    fn value_agent_buys_at_mid_when_fundamental_is_above() {
        let b = worked_example_book();
        let params = ValueParams { threshold: 2.0, observation_noise: 0.0, size: 20 };
        let v = view(&b, 98.0);
        let order = value_rule(3, v.fundamental, &v, &params).unwrap();
        assert_eq!(order, OrderRequest::limit(3, Side::Bid, 93, 20));
        assert_eq!(value_rule(3, 94.0, &v, &params), None);
        assert_eq!(value_rule(3, 90.0, &v, &params).unwrap().side, Side::Ask);
    }

    #[test]
    fn market_maker_quotes_then_replaces_stale() {
        let mut b = worked_example_book();
        let cfg = BgPopulationConfig::default();
        let mut mm = BgAgent::new(9, Archetype::MarketMaker);
        let mut rng = seed::rng(0);
        for expected in [Side::Bid, Side::Ask] {
            let req = mm.act(&view(&b, 93.0), &cfg, &mut rng).unwrap();
            assert_eq!(req.side, expected);
            let sub = b.submit(req).unwrap();
            mm.on_accepted(&req, sub.order_id);
        }
        assert_eq!(mm.act(&view(&b, 93.0), &cfg, &mut rng), None);
        // mid moves to 93.5: the bid target stays at 92, the ask target moves to 95
        b.submit(OrderRequest::limit(1, Side::Bid, 93, 5)).unwrap();
        let req = mm.act(&view(&b, 93.0), &cfg, &mut rng).unwrap();
        assert_eq!(req.side, Side::Ask);
        assert!(matches!(req.kind, OrderKind::Replace { .. }));
    }

    #[test]
    fn spawn_counts() {
        let agents = BgPopulationConfig::default().spawn(10);
        assert_eq!(agents.len(), 104);
        assert_eq!(agents[0].archetype, Archetype::MarketMaker);
        assert_eq!(agents[0].id, 10);
        assert!(BgPopulationConfig::default().validate().is_ok());
    }
}
