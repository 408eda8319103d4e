//! Step-level stylized-fact time series of rollouts, one row per exp step.

use std::io::Write;

use crate::csvio::{fmt_f64, fmt_opt, writer_with_meta};
use crate::env::Rollout;
use crate::lob::LevelCount;

pub fn facts_header(levels: &[LevelCount]) -> Vec<String> {
    let mut h: Vec<String> = ["epoch", "rollout", "t", "mid", "spread", "log_return", "price_impact"].map(String::from).into();
    for n in levels {
        h.push(format!("imbalance_{n}"));
        h.push(format!("volume_bid_{n}"));
        h.push(format!("volume_ask_{n}"));
    }
    h.extend(["depth", "direction", "cum_executed", "bg_interactions"].map(String::from));
    h
}

/// Write the step-end facts of every rollout. `cum_executed` is the exp
/// agent's executed volume so far.
pub fn write_step_facts<W: Write>(
    out: W,
    seed: u64,
    epoch: usize,
    levels: &[LevelCount],
    rollouts: &[Rollout],
) -> csv::Result<()> {
    let mut w = writer_with_meta(out, seed)?;
    w.write_record(facts_header(levels))?;
    for (i, r) in rollouts.iter().enumerate() {
        for s in &r.steps {
            let f = &s.facts_after;
            let mut row = vec![
                epoch.to_string(),
                i.to_string(),
                s.t.to_string(),
                fmt_opt(f.mid.map(fmt_f64)),
                fmt_opt(f.spread),
                fmt_opt(f.log_return.map(fmt_f64)),
                fmt_opt(f.price_impact.map(fmt_f64)),
            ];
            for n in levels {
                match f.level(*n) {
                    Some(l) => row.extend([fmt_f64(l.imbalance), l.volume_bid.to_string(), l.volume_ask.to_string()]),
                    None => row.extend(std::iter::repeat_n(String::new(), 3)),
                }
            }
            row.extend([
                fmt_opt(f.depth),
                f.direction.to_string(),
                (r.parent_volume - s.remaining_after).to_string(),
                s.bg_interactions.len().to_string(),
            ]);
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}
