//! Gaussian kernel density estimate for a continuous-action variant of the
//! world agent, where actions are generator outputs `G(z | S)` with standard
//! normal latent `z`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::stats::{log_sum_exp, median, pairwise_distances, sq_dist};

/// Smallest bandwidth used when the median heuristic collapses to zero.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

/// Median pairwise distance among the samples.
pub fn median_bandwidth(samples: &[Vec<f64>]) -> Result<f64, AgentError> {
    if samples.len() < 2 {
        return Err(AgentError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let refs: Vec<&[f64]> = samples.iter().map(Vec::as_slice).collect();
    let h = median(&pairwise_distances(&refs)).unwrap_or(0.0);
    if h > 0.0 {
        Ok(h)
    } else {
        Err(AgentError::DegenerateSamples)
    }
}

fn resolve(samples: &[Vec<f64>], bw: Bandwidth) -> Result<f64, AgentError> {
    match bw {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
        Bandwidth::Fixed(h) => Err(AgentError::Format(format!("bandwidth {h} must be positive"))),
        Bandwidth::Median => match median_bandwidth(samples) {
            Err(AgentError::DegenerateSamples) => {
                log::warn!("degenerate KDE samples, using bandwidth {BANDWIDTH_FLOOR}");
                Ok(BANDWIDTH_FLOOR)
            }
            other => other,
        },
    }
}

/// Log-density at `query` of the isotropic Gaussian KDE over `samples`.
pub fn kde_log_density(samples: &[Vec<f64>], query: &[f64], bw: Bandwidth) -> Result<f64, AgentError> {
    if samples.is_empty() {
        return Err(AgentError::TooFewSamples { needed: 1, got: 0 });
    }
    let d = query.len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(AgentError::Dimension { expected: d, got: bad.len() });
    }
    let h = resolve(samples, bw)?;
    let norm = -0.5 * d as f64 * (2.0 * PI * h * h).ln();
    let terms: Vec<f64> = samples.iter().map(|s| norm - sq_dist(s, query) / (2.0 * h * h)).collect();
    Ok(log_sum_exp(&terms) - (samples.len() as f64).ln())
}

/// Draw `n` generator outputs with standard normal latents.
pub fn generator_samples<G, R>(generator: G, n: usize, latent_dim: usize, rng: &mut R) -> Vec<Vec<f64>>
where
    G: Fn(&[f64]) -> Vec<f64>,
    R: Rng + ?Sized,
{
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..latent_dim).map(|_| StandardNormal.sample(rng)).collect();
            generator(&z)
        })
        .collect()
}
