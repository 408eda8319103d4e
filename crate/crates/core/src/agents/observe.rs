//! Feature encoding of the world agent's observation.
//!
//! The state is a window of five stylized-fact vectors (the facts at the
//! wake-up instant followed by the four most recent step-end facts, zero
//! padded at the start of a scenario) plus a top-of-book summary. Only public
//! book state enters; the agent's own resting orders only set the cancel mask.

use super::world::WorldState;
use crate::lob::{Book, LevelCount, Side, StylizedFacts};

pub const WINDOW: usize = 5;
pub const FACT_FEATURES: usize = 7;
pub const BOOK_LEVELS: usize = 5;
pub const FEATURE_DIM: usize = WINDOW * FACT_FEATURES + 4 * BOOK_LEVELS;

/// Scaled facts: returns in basis points of a tenth, spread and volumes in
/// units that keep typical values near one.
pub fn fact_features(f: &StylizedFacts) -> [f64; FACT_FEATURES] {
    let top5 = f.level(LevelCount::Top(5));
    [
        f.log_return.unwrap_or(0.0) * 1e3,
        f.price_impact.unwrap_or(0.0) * 1e3,
        f.spread.unwrap_or(0) as f64 / 10.0,
        top5.map_or(0.0, |l| l.imbalance - 0.5),
        f.imbalance(LevelCount::All).map_or(0.0, |i| i - 0.5),
        f.direction as f64,
        top5.map_or(0.0, |l| l.volume() as f64 / 1000.0),
    ]
}

/// Build the observation. `history` holds step-end facts, oldest first.
pub fn world_state(book: &Book, current: &StylizedFacts, history: &[StylizedFacts], cancel_slots: usize) -> WorldState {
    let mut features = Vec::with_capacity(FEATURE_DIM);
    features.extend(fact_features(current));
    for i in 0..WINDOW - 1 {
        match history.len().checked_sub(i + 1).map(|k| &history[k]) {
            Some(f) => features.extend(fact_features(f)),
            None => features.extend([0.0; FACT_FEATURES]),
        }
    }
    let mid = current.mid.unwrap_or(0.0);
    let bids = book.levels(Side::Bid, BOOK_LEVELS);
    let asks = book.levels(Side::Ask, BOOK_LEVELS);
    for i in 0..BOOK_LEVELS {
        match bids.get(i) {
            Some(&(p, v)) => features.extend([(mid - p as f64) / 10.0, v as f64 / 100.0]),
            None => features.extend([0.0, 0.0]),
        }
        match asks.get(i) {
            Some(&(p, v)) => features.extend([(p as f64 - mid) / 10.0, v as f64 / 100.0]),
            None => features.extend([0.0, 0.0]),
        }
    }
    WorldState { features, cancel_slots }
}
