//! Stylized facts of a book snapshot: mid, spread, returns, imbalance,
//! level volumes, order depth and direction.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::book::{Book, OrderKind, Price, Side, Volume};
use super::LobError;

/// How many book levels an imbalance/volume statistic aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LevelCount {
    Top(usize),
    All,
}

impl LevelCount {
    fn take(self) -> usize {
        match self {
            LevelCount::Top(n) => n,
            LevelCount::All => usize::MAX,
        }
    }
}

impl fmt::Display for LevelCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelCount::Top(n) => write!(f, "{n}"),
            LevelCount::All => f.write_str("all"),
        }
    }
}

impl Serialize for LevelCount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !s.is_human_readable() {
            // compact formats store `All` as 0
            return s.serialize_u64(match self {
                LevelCount::Top(n) => *n as u64,
                LevelCount::All => 0,
            });
        }
        match self {
            LevelCount::Top(n) => s.serialize_u64(*n as u64),
            LevelCount::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for LevelCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        if !d.is_human_readable() {
            return Ok(match u64::deserialize(d)? {
                0 => LevelCount::All,
                n => LevelCount::Top(n as usize),
            });
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(0) => Err(serde::de::Error::custom("level count must be positive")),
            Raw::N(n) => Ok(LevelCount::Top(n)),
            Raw::S(s) if s == "all" => Ok(LevelCount::All),
            Raw::S(s) => s
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .map(LevelCount::Top)
                .ok_or_else(|| serde::de::Error::custom(format!("bad level count {s:?}"))),
        }
    }
}

/// Imbalance and volumes over the first `n` levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelFacts {
    pub n: LevelCount,
    pub imbalance: f64,
    pub volume_bid: Volume,
    pub volume_ask: Volume,
}

impl LevelFacts {
    pub fn volume(&self) -> Volume {
        self.volume_bid + self.volume_ask
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylizedFacts {
    /// `None` when either side of the book is empty.
    pub mid: Option<f64>,
    pub spread: Option<Price>,
    pub log_return: Option<f64>,
    pub price_impact: Option<f64>,
    pub levels: Vec<LevelFacts>,
    /// Depth of the most recent limit order, when one was placed.
    pub depth: Option<Price>,
    pub direction: i8,
}

impl StylizedFacts {
    pub fn is_available(&self) -> bool {
        self.mid.is_some()
    }

    pub fn level(&self, n: LevelCount) -> Option<&LevelFacts> {
        self.levels.iter().find(|l| l.n == n)
    }

    pub fn imbalance(&self, n: LevelCount) -> Option<f64> {
        self.level(n).map(|l| l.imbalance)
    }
}

/// Compute the facts of `book` relative to the previous observed mid and the
/// scenario's starting mid (both in ticks).
///
/// With an empty side, mid/spread/returns are `None` and the imbalance is 0
/// (no bids), 1 (no asks) or 0.5 (empty book).
pub fn snapshot_facts(book: &Book, scenario_start_mid: f64, prev_mid: f64, levels: &[LevelCount]) -> StylizedFacts {
    let mid = book.mid();
    let level_facts = levels
        .iter()
        .map(|&n| {
            let vb: Volume = book.levels(Side::Bid, n.take()).iter().map(|l| l.1).sum();
            let va: Volume = book.levels(Side::Ask, n.take()).iter().map(|l| l.1).sum();
            let imbalance = if vb + va == 0 { 0.5 } else { vb as f64 / (vb + va) as f64 };
            LevelFacts { n, imbalance, volume_bid: vb, volume_ask: va }
        })
        .collect();
    let log_return = mid.filter(|_| prev_mid > 0.0).map(|m| (m / prev_mid).ln());
    let price_impact = mid.filter(|_| scenario_start_mid > 0.0).map(|m| (m / scenario_start_mid).ln());
    let direction = match mid {
        Some(m) if m > prev_mid => 1,
        Some(m) if m < prev_mid => -1,
        _ => 0,
    };
    StylizedFacts {
        mid,
        spread: book.spread(),
        log_return,
        price_impact,
        levels: level_facts,
        depth: None,
        direction,
    }
}

/// Which ask-side depth expression to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthFormula {
    /// `p - p_a1`, mirroring the bid side.
    #[default]
    SignCorrected,
    /// `p_a1 + p`, as commonly printed.
    Literal,
}

/// Distance of a limit order's price from the same-side best quote.
pub fn depth_of(book: &Book, side: Side, kind: &OrderKind, formula: DepthFormula) -> Result<Price, LobError> {
    let OrderKind::Limit { price } = *kind else {
        return Err(LobError::NotLimit);
    };
    let best = book.best(side).ok_or(LobError::EmptySide(side))?;
    Ok(match (side, formula) {
        (Side::Bid, _) => best - price,
        (Side::Ask, DepthFormula::SignCorrected) => price - best,
        (Side::Ask, DepthFormula::Literal) => best + price,
    })
}
