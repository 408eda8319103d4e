//! Distances between feedback samples and the bootstrap study of how well
//! they separate two markets.

use std::io::{Read, Write};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csvio::{fmt_f64, reader, writer_with_meta};
use crate::seed;
use crate::stats::{mean, median, quantile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("need at least {needed} samples per set, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("empty sample set")]
    Empty,
    #[error("pool of {pool} samples cannot supply {n} draws")]
    PoolTooSmall { pool: usize, n: usize },
    #[error("bandwidth {0} must be positive")]
    BadBandwidth(f64),
    #[error("envelope csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sigma {
    Fixed(f64),
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelSpec {
    Gaussian { sigma: Sigma },
    Linear,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Gaussian { sigma: Sigma::Median }
    }
}

/// A kernel with its bandwidth resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Gaussian(f64),
    Linear,
}

impl Kernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Kernel::Gaussian(s) => (-(x - y) * (x - y) / (2.0 * s * s)).exp(),
            Kernel::Linear => x * y,
        }
    }
}

/// Median pairwise distance of the pooled samples. Falls back to the median
/// of the positive distances, then to 1 when every sample is equal.
pub fn median_heuristic(xs: &[f64], ys: &[f64]) -> f64 {
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let mut d = Vec::with_capacity(pooled.len() * pooled.len() / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push((pooled[i] - pooled[j]).abs());
        }
    }
    match median(&d) {
        Some(m) if m > 0.0 => m,
        _ => {
            let positive: Vec<f64> = d.into_iter().filter(|v| *v > 0.0).collect();
            median(&positive).unwrap_or(1.0)
        }
    }
}

impl KernelSpec {
    pub fn resolve(&self, xs: &[f64], ys: &[f64]) -> Result<Kernel, MetricError> {
        match *self {
            KernelSpec::Linear => Ok(Kernel::Linear),
            KernelSpec::Gaussian { sigma: Sigma::Fixed(s) } if s > 0.0 && s.is_finite() => Ok(Kernel::Gaussian(s)),
            KernelSpec::Gaussian { sigma: Sigma::Fixed(s) } => Err(MetricError::BadBandwidth(s)),
            KernelSpec::Gaussian { sigma: Sigma::Median } => Ok(Kernel::Gaussian(median_heuristic(xs, ys))),
        }
    }
}

fn need_two(xs: &[f64], ys: &[f64]) -> Result<(), MetricError> {
    let got = xs.len().min(ys.len());
    if got < 2 {
        return Err(MetricError::TooFewSamples { needed: 2, got });
    }
    Ok(())
}

/// Mean of `k(a_i, a_j)` over `i != j`.
fn within(a: &[f64], k: &Kernel) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            if i != j {
                s += k.eval(a[i], a[j]);
            }
        }
    }
    s / (a.len() * (a.len() - 1)) as f64
}

fn across(a: &[f64], b: &[f64], k: &Kernel) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += k.eval(*x, *y);
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Unbiased squared MMD with a resolved kernel.
pub fn mmd_u_with(xs: &[f64], ys: &[f64], k: &Kernel) -> Result<f64, MetricError> {
    need_two(xs, ys)?;
    Ok(within(xs, k) + within(ys, k) - 2.0 * across(xs, ys, k))
}

/// Unbiased squared maximum mean discrepancy (diagonal terms excluded).
/// May be negative.
pub fn mmd_u(xs: &[f64], ys: &[f64], kernel: &KernelSpec) -> Result<f64, MetricError> {
    mmd_u_with(xs, ys, &kernel.resolve(xs, ys)?)
}

/// Energy-distance statistic with squared distances:
/// `mean_{i!=j}|x_i-x_j|^2 - 2 mean|x-y|^2 + mean_{i!=j}|y_i-y_j|^2`.
///
/// Expanding the squares shows this equals `-2` times the unbiased MMD with
/// a linear kernel, so it is the negative of the usual energy distance and
/// is at most zero in expectation.
pub fn energy_distance(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    need_two(xs, ys)?;
    let sq = |a: f64, b: f64| (a - b) * (a - b);
    let mut cross = 0.0;
    for x in xs {
        for y in ys {
            cross += sq(*x, *y);
        }
    }
    let cross = cross / (xs.len() * ys.len()) as f64;
    let inner = |a: &[f64]| {
        let mut s = 0.0;
        for i in 0..a.len() {
            for j in 0..a.len() {
                if i != j {
                    s += sq(a[i], a[j]);
                }
            }
        }
        s / (a.len() * (a.len() - 1)) as f64
    };
    Ok(inner(xs) - 2.0 * cross + inner(ys))
}

/// 1-D Wasserstein-1 distance: the integral of `|F - G|` over the line.
pub fn emd_1d(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = a.iter().chain(&b).copied().collect();
    all.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    for w in all.windows(2) {
        while i < a.len() && a[i] <= w[0] {
            i += 1;
        }
        while j < b.len() && b[j] <= w[0] {
            j += 1;
        }
        total += (i as f64 / na - j as f64 / nb).abs() * (w[1] - w[0]);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DHat {
    Mmd,
    Ed,
    Emd,
}

impl DHat {
    pub fn name(&self) -> &'static str {
        match self {
            DHat::Mmd => "MMD",
            DHat::Ed => "ED",
            DHat::Emd => "EMD",
        }
    }

    pub fn estimate(&self, xs: &[f64], ys: &[f64], kernel: &KernelSpec) -> Result<f64, MetricError> {
        match self {
            DHat::Mmd => mmd_u(xs, ys, kernel),
            DHat::Ed => energy_distance(xs, ys),
            DHat::Emd => emd_1d(xs, ys),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeStats {
    pub mean: f64,
    pub q5: f64,
    pub q95: f64,
}

impl EnvelopeStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self { mean: mean(values)?, q5: quantile(values, 0.05)?, q95: quantile(values, 0.95)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub d_hat: DHat,
    pub value: f64,
    pub n_world: usize,
    pub n_real: usize,
    pub bootstrap: Option<EnvelopeStats>,
}

/// Distance between world and real feedbacks.
pub fn d_metric(world: &[f64], real: &[f64], d_hat: DHat, kernel: &KernelSpec) -> Result<MetricReport, MetricError> {
    Ok(MetricReport {
        d_hat,
        value: d_hat.estimate(world, real, kernel)?,
        n_world: world.len(),
        n_real: real.len(),
        bootstrap: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub n: usize,
    pub stats: EnvelopeStats,
}

/// The draws behind one envelope row: `reps` pairs of size-`n` subsamples
/// drawn without replacement from each pool.
pub fn bootstrap_draws(
    pool_a: &[f64],
    pool_b: &[f64],
    n: usize,
    reps: usize,
    d_hat: DHat,
    kernel: &KernelSpec,
    seed: u64,
) -> Result<Vec<f64>, MetricError> {
    for pool in [pool_a, pool_b] {
        if pool.len() < n {
            return Err(MetricError::PoolTooSmall { pool: pool.len(), n });
        }
    }
    let mut rng = seed::rng(seed::derive(seed, &[seed::stream::BOOTSTRAP, n as u64]));
    (0..reps)
        .map(|_| {
            let a: Vec<f64> = sample(&mut rng, pool_a.len(), n).iter().map(|i| pool_a[i]).collect();
            let b: Vec<f64> = sample(&mut rng, pool_b.len(), n).iter().map(|i| pool_b[i]).collect();
            d_hat.estimate(&a, &b, kernel)
        })
        .collect()
}

/// Mean and 5%/95% quantiles of the distance over subsample draws, per `n`.
pub fn bootstrap_envelope(
    pool_a: &[f64],
    pool_b: &[f64],
    ns: &[usize],
    reps: usize,
    d_hat: DHat,
    kernel: &KernelSpec,
    seed: u64,
) -> Result<Vec<EnvelopeRow>, MetricError> {
    ns.iter()
        .map(|&n| {
            let draws = bootstrap_draws(pool_a, pool_b, n, reps, d_hat, kernel, seed)?;
            let stats = EnvelopeStats::of(&draws).ok_or(MetricError::Empty)?;
            Ok(EnvelopeRow { n, stats })
        })
        .collect()
}

/// Smallest grid `n` from which the world-vs-real q5 stays above the
/// real-vs-real q95 for every larger grid point.
pub fn crossover(world_vs_real: &[EnvelopeRow], real_vs_real: &[EnvelopeRow]) -> Option<usize> {
    let mut best = None;
    for (w, r) in world_vs_real.iter().zip(real_vs_real).rev() {
        if w.stats.q5 > r.stats.q95 {
            best = Some(w.n);
        } else {
            break;
        }
    }
    best
}

pub const ENVELOPE_HEADER: [&str; 7] = ["d_hat", "feedback_kind", "N", "mean", "q5", "q95", "comparison"];

/// One block of envelope rows sharing a distance, feedback kind and
/// comparison label.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeTable {
    pub d_hat: DHat,
    pub feedback_kind: String,
    pub comparison: String,
    pub rows: Vec<EnvelopeRow>,
}

pub fn write_envelope_csv<W: Write>(out: W, seed: u64, tables: &[EnvelopeTable]) -> std::io::Result<()> {
    let mut w = writer_with_meta(out, seed)?;
    w.write_record(ENVELOPE_HEADER)?;
    for t in tables {
        for r in &t.rows {
            w.write_record([
                t.d_hat.name(),
                &t.feedback_kind,
                &r.n.to_string(),
                &fmt_f64(r.stats.mean),
                &fmt_f64(r.stats.q5),
                &fmt_f64(r.stats.q95),
                &t.comparison,
            ])?;
        }
    }
    w.flush()
}

pub fn read_envelope_csv<R: Read>(input: R) -> Result<Vec<EnvelopeTable>, MetricError> {
    let err = |e: String| MetricError::Csv(e);
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ENVELOPE_HEADER {
        return Err(err(format!("unexpected header {headers:?}")));
    }
    let mut tables: Vec<EnvelopeTable> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let d_hat = match &rec[0] {
            "MMD" => DHat::Mmd,
            "ED" => DHat::Ed,
            "EMD" => DHat::Emd,
            other => return Err(err(format!("unknown distance {other}"))),
        };
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| err(format!("{}: {e}", &rec[i])));
        let row = EnvelopeRow {
            n: rec[2].parse().map_err(|e| err(format!("N: {e}")))?,
            stats: EnvelopeStats { mean: num(3)?, q5: num(4)?, q95: num(5)? },
        };
        match tables.last_mut() {
            Some(t) if t.d_hat == d_hat && t.feedback_kind == rec[1] && t.comparison == rec[6] => t.rows.push(row),
            _ => tables.push(EnvelopeTable {
                d_hat,
                feedback_kind: rec[1].to_string(),
                comparison: rec[6].to_string(),
                rows: vec![row],
            }),
        }
    }
    Ok(tables)
}
