//! Line-oriented CSV export of book snapshots.

use std::io::Write;

use super::{Book, LevelCount, Price, Side, StylizedFacts, Volume};
use crate::csvio::{fmt_f64, fmt_opt, writer_with_meta};

#[derive(Debug, Clone, PartialEq)]
pub struct BookSnapshot {
    pub event_clock: u64,
    pub bids: Vec<(Price, Volume)>,
    pub asks: Vec<(Price, Volume)>,
    pub facts: StylizedFacts,
}

impl BookSnapshot {
    pub fn capture(book: &Book, facts: StylizedFacts, k: usize) -> Self {
        Self {
            event_clock: book.event_clock(),
            bids: book.levels(Side::Bid, k),
            asks: book.levels(Side::Ask, k),
            facts,
        }
    }
}

pub fn header(k: usize, levels: &[LevelCount]) -> Vec<String> {
    let mut h = vec!["event_clock".to_string()];
    for i in 1..=k {
        for col in ["bid_price", "bid_volume", "ask_price", "ask_volume"] {
            h.push(format!("{col}_{i}"));
        }
    }
    h.extend(["mid", "spread", "log_return", "price_impact"].map(String::from));
    for n in levels {
        h.push(format!("imbalance_{n}"));
        h.push(format!("volume_{n}"));
        h.push(format!("volume_bid_{n}"));
        h.push(format!("volume_ask_{n}"));
    }
    h.extend(["depth", "direction"].map(String::from));
    h
}

pub fn row(s: &BookSnapshot, k: usize, levels: &[LevelCount]) -> Vec<String> {
    let mut r = vec![s.event_clock.to_string()];
    for i in 0..k {
        let b = s.bids.get(i);
        let a = s.asks.get(i);
        r.push(fmt_opt(b.map(|l| l.0)));
        r.push(fmt_opt(b.map(|l| l.1)));
        r.push(fmt_opt(a.map(|l| l.0)));
        r.push(fmt_opt(a.map(|l| l.1)));
    }
    let f = &s.facts;
    r.push(f.mid.map(fmt_f64).unwrap_or_default());
    r.push(fmt_opt(f.spread));
    r.push(f.log_return.map(fmt_f64).unwrap_or_default());
    r.push(f.price_impact.map(fmt_f64).unwrap_or_default());
    for n in levels {
        match f.level(*n) {
            Some(l) => {
                r.push(fmt_f64(l.imbalance));
                r.push(l.volume().to_string());
                r.push(l.volume_bid.to_string());
                r.push(l.volume_ask.to_string());
            }
            None => r.extend(std::iter::repeat_n(String::new(), 4)),
        }
    }
    r.push(fmt_opt(f.depth));
    r.push(f.direction.to_string());
    r
}

/// Write snapshots with `k` book levels per side.
pub fn write_snapshots<W: Write>(
    out: W,
    seed: u64,
    k: usize,
    levels: &[LevelCount],
    snapshots: &[BookSnapshot],
) -> csv::Result<()> {
    let mut w = writer_with_meta(out, seed)?;
    w.write_record(header(k, levels))?;
    for s in snapshots {
        w.write_record(row(s, k, levels))?;
    }
    w.flush()?;
    Ok(())
}
