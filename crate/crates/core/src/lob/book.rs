//! Price-time-priority limit order book.
//!
//! Prices are integer ticks. Each side is a `BTreeMap` from price to a FIFO
//! queue of resting orders; the best bid is the largest bid key and the best
//! ask the smallest ask key. All mutation goes through [`Book::submit`].

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::LobError;

pub type Price = i64;
pub type Volume = u64;
pub type OrderId = u64;
pub type AgentId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }

    /// +1 for buys, -1 for sells.
    pub fn sign(self) -> i64 {
        match self {
            Side::Bid => 1,
            Side::Ask => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderKind {
    Limit { price: Price },
    Market,
    Cancel { target: OrderId },
    /// Cancel `target` and insert a fresh limit order at `price` with a new
    /// timestamp (loses queue priority).
    Replace { target: OrderId, price: Price },
}

impl OrderKind {
    pub fn price(&self) -> Option<Price> {
        match *self {
            OrderKind::Limit { price } | OrderKind::Replace { price, .. } => Some(price),
            OrderKind::Market | OrderKind::Cancel { .. } => None,
        }
    }
}

/// An order as handed to the book. Id and timestamp are assigned on arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRequest {
    pub owner: AgentId,
    pub side: Side,
    pub kind: OrderKind,
    /// Ignored for cancels.
    pub volume: Volume,
}

impl OrderRequest {
    pub fn limit(owner: AgentId, side: Side, price: Price, volume: Volume) -> Self {
        Self { owner, side, kind: OrderKind::Limit { price }, volume }
    }

    pub fn market(owner: AgentId, side: Side, volume: Volume) -> Self {
        Self { owner, side, kind: OrderKind::Market, volume }
    }

    pub fn cancel(owner: AgentId, side: Side, target: OrderId) -> Self {
        Self { owner, side, kind: OrderKind::Cancel { target }, volume: 0 }
    }

    pub fn replace(owner: AgentId, side: Side, target: OrderId, price: Price, volume: Volume) -> Self {
        Self { owner, side, kind: OrderKind::Replace { target, price }, volume }
    }

    fn validate(&self) -> Result<(), LobError> {
        match self.kind {
            OrderKind::Limit { .. } | OrderKind::Market | OrderKind::Replace { .. } if self.volume == 0 => {
                Err(LobError::InvalidOrder("volume must be positive".into()))
            }
            OrderKind::Limit { price } | OrderKind::Replace { price, .. } if price <= 0 => {
                Err(LobError::InvalidOrder(format!("price {price} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// A resting limit order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestingOrder {
    pub id: OrderId,
    pub owner: AgentId,
    pub side: Side,
    pub price: Price,
    pub volume: Volume,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub taker_order_id: OrderId,
    pub maker_order_id: OrderId,
    pub taker_owner: AgentId,
    pub maker_owner: AgentId,
    /// Side of the taker.
    pub taker_side: Side,
    pub price: Price,
    pub volume: Volume,
    pub event_clock: u64,
}

/// Outcome of a single [`Book::submit`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Submission {
    /// Id assigned to the incoming order (the fresh order for a replace,
    /// `None` for a cancel).
    pub order_id: Option<OrderId>,
    pub executions: Vec<Execution>,
    /// Volume left resting on the book.
    pub resting: Volume,
    /// Market-order volume discarded because the opposite side emptied.
    pub discarded: Volume,
    /// Volume removed by a cancel or replace.
    pub cancelled: Volume,
}

impl Submission {
    pub fn executed_volume(&self) -> Volume {
        self.executions.iter().map(|e| e.volume).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Book {
    bids: BTreeMap<Price, VecDeque<RestingOrder>>,
    asks: BTreeMap<Price, VecDeque<RestingOrder>>,
    index: BTreeMap<OrderId, (Side, Price)>,
    tick_size: f64,
    last_trade_price: Option<Price>,
    event_clock: u64,
    next_id: OrderId,
}

impl Default for Book {
    fn default() -> Self {
        Self::new(0.01)
    }
}

impl Book {
    pub fn new(tick_size: f64) -> Self {
        assert!(tick_size > 0.0, "tick size must be positive");
        Self {
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            index: BTreeMap::new(),
            tick_size,
            last_trade_price: None,
            event_clock: 0,
            next_id: 1,
        }
    }

    pub fn tick_size(&self) -> f64 {
        self.tick_size
    }

    pub fn event_clock(&self) -> u64 {
        self.event_clock
    }

    pub fn last_trade_price(&self) -> Option<Price> {
        self.last_trade_price
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    pub fn best(&self, side: Side) -> Option<Price> {
        match side {
            Side::Bid => self.best_bid(),
            Side::Ask => self.best_ask(),
        }
    }

    /// Mid-price in ticks; `None` if either side is empty.
    pub fn mid(&self) -> Option<f64> {
        Some((self.best_bid()? + self.best_ask()?) as f64 / 2.0)
    }

    pub fn spread(&self) -> Option<Price> {
        Some(self.best_ask()? - self.best_bid()?)
    }

    pub fn is_crossed(&self) -> bool {
        matches!((self.best_bid(), self.best_ask()), (Some(b), Some(a)) if b >= a)
    }

    /// Top `k` aggregated levels of one side, best first.
    pub fn levels(&self, side: Side, k: usize) -> Vec<(Price, Volume)> {
        let agg = |(p, q): (&Price, &VecDeque<RestingOrder>)| (*p, q.iter().map(|o| o.volume).sum());
        match side {
            Side::Bid => self.bids.iter().rev().take(k).map(agg).collect(),
            Side::Ask => self.asks.iter().take(k).map(agg).collect(),
        }
    }

    pub fn level_count(&self, side: Side) -> usize {
        match side {
            Side::Bid => self.bids.len(),
            Side::Ask => self.asks.len(),
        }
    }

    /// Resting orders at one price, in queue order.
    pub fn queue(&self, side: Side, price: Price) -> impl Iterator<Item = &RestingOrder> {
        self.side(side).get(&price).into_iter().flatten()
    }

    pub fn order(&self, id: OrderId) -> Option<&RestingOrder> {
        let (side, price) = self.index.get(&id)?;
        self.side(*side).get(price)?.iter().find(|o| o.id == id)
    }

    /// All resting orders of `owner`, oldest first.
    pub fn orders_of(&self, owner: AgentId) -> Vec<RestingOrder> {
        let mut out: Vec<RestingOrder> = self
            .bids
            .values()
            .chain(self.asks.values())
            .flatten()
            .filter(|o| o.owner == owner)
            .copied()
            .collect();
        out.sort_by_key(|o| (o.timestamp, o.id));
        out
    }

    pub fn resting_orders(&self) -> impl Iterator<Item = &RestingOrder> {
        self.bids.values().chain(self.asks.values()).flatten()
    }

    pub fn total_volume(&self, side: Side) -> Volume {
        self.side(side).values().flatten().map(|o| o.volume).sum()
    }

    fn side(&self, side: Side) -> &BTreeMap<Price, VecDeque<RestingOrder>> {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut BTreeMap<Price, VecDeque<RestingOrder>> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    /// Process one incoming order and restore the book invariants.
    pub fn submit(&mut self, req: OrderRequest) -> Result<Submission, LobError> {
        req.validate()?;
        match req.kind {
            OrderKind::Cancel { target } => {
                let cancelled = self.remove_owned(req.owner, target)?;
                self.event_clock += 1;
                Ok(Submission { cancelled, ..Default::default() })
            }
            OrderKind::Replace { target, price } => {
                let cancelled = self.remove_owned(req.owner, target)?;
                let mut sub = self.place(req.owner, req.side, Some(price), req.volume);
                sub.cancelled = cancelled;
                Ok(sub)
            }
            OrderKind::Limit { price } => Ok(self.place(req.owner, req.side, Some(price), req.volume)),
            OrderKind::Market => Ok(self.place(req.owner, req.side, None, req.volume)),
        }
    }

    fn remove_owned(&mut self, owner: AgentId, target: OrderId) -> Result<Volume, LobError> {
        let &(side, price) = self.index.get(&target).ok_or(LobError::UnknownTarget(target))?;
        let queue = self.side_mut(side).get_mut(&price).ok_or(LobError::UnknownTarget(target))?;
        let pos = queue.iter().position(|o| o.id == target).ok_or(LobError::UnknownTarget(target))?;
        if queue[pos].owner != owner {
            return Err(LobError::NotOwner { order: target, owner });
        }
        let removed = queue.remove(pos).expect("position is in range");
        if queue.is_empty() {
            self.side_mut(side).remove(&price);
        }
        self.index.remove(&target);
        Ok(removed.volume)
    }

    /// Match an incoming buy/sell against the opposite side, then rest any
    /// limit remainder. `limit == None` is a market order.
    fn place(&mut self, owner: AgentId, side: Side, limit: Option<Price>, volume: Volume) -> Submission {
        let id = self.next_id;
        self.next_id += 1;
        let clock = self.event_clock;
        self.event_clock += 1;

        let mut remaining = volume;
        let mut executions = Vec::new();
        let contra = side.opposite();
        while remaining > 0 {
            let Some(best) = self.best(contra) else { break };
            let crosses = match (side, limit) {
                (_, None) => true,
                (Side::Bid, Some(p)) => best <= p,
                (Side::Ask, Some(p)) => best >= p,
            };
            if !crosses {
                break;
            }
            let levels = match contra {
                Side::Bid => &mut self.bids,
                Side::Ask => &mut self.asks,
            };
            let queue = levels.get_mut(&best).expect("best level exists");
            while remaining > 0 {
                let Some(maker) = queue.front_mut() else { break };
                let fill = remaining.min(maker.volume);
                maker.volume -= fill;
                remaining -= fill;
                executions.push(Execution {
                    taker_order_id: id,
                    maker_order_id: maker.id,
                    taker_owner: owner,
                    maker_owner: maker.owner,
                    taker_side: side,
                    price: best,
                    volume: fill,
                    event_clock: clock,
                });
                if maker.volume == 0 {
                    let done = queue.pop_front().expect("front exists");
                    self.index.remove(&done.id);
                }
            }
            if queue.is_empty() {
                levels.remove(&best);
            }
            self.last_trade_price = Some(best);
        }

        let mut sub = Submission { order_id: Some(id), executions, ..Default::default() };
        match limit {
            Some(price) if remaining > 0 => {
                let order = RestingOrder { id, owner, side, price, volume: remaining, timestamp: clock };
                self.side_mut(side).entry(price).or_default().push_back(order);
                self.index.insert(id, (side, price));
                sub.resting = remaining;
            }
            Some(_) => {}
            None => sub.discarded = remaining,
        }
        sub
    }

    /// Check the structural invariants. Used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.is_crossed() {
            return Err(format!("crossed book: bid {:?} ask {:?}", self.best_bid(), self.best_ask()));
        }
        let mut seen = 0;
        for (side, map) in [(Side::Bid, &self.bids), (Side::Ask, &self.asks)] {
            for (price, queue) in map {
                if queue.is_empty() {
                    return Err(format!("empty level {price} on {side:?}"));
                }
                let mut last = None;
                for o in queue {
                    if o.volume == 0 {
                        return Err(format!("zero-volume order {}", o.id));
                    }
                    if o.price != *price || o.side != side {
                        return Err(format!("order {} filed under wrong level", o.id));
                    }
                    if last.is_some_and(|t| t > o.timestamp) {
                        return Err(format!("FIFO violated at {price}"));
                    }
                    last = Some(o.timestamp);
                    if self.index.get(&o.id) != Some(&(side, *price)) {
                        return Err(format!("index out of sync for order {}", o.id));
                    }
                    seen += 1;
                }
            }
        }
        if seen != self.index.len() {
            return Err("index has stale entries".into());
        }
        Ok(())
    }
}
