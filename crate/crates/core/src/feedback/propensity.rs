//! Logistic-regression propensity model.

use serde::{Deserialize, Serialize};

use super::FeedbackError;
use crate::agents::exp::{sigmoid, EXP_FEATURES};
use crate::agents::ExpAgentState;

const MAX_ITERATIONS: usize = 10_000;
const TOLERANCE: f64 = 1e-8;
const STEP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub bias: f64,
    pub weights: [f64; EXP_FEATURES],
}

impl LogisticModel {
    pub fn predict_features(&self, x: &[f64; EXP_FEATURES]) -> f64 {
        sigmoid(self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }

    pub fn predict(&self, s: &ExpAgentState) -> f64 {
        self.predict_features(&s.features())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    pub model: LogisticModel,
    pub iterations: usize,
    pub loss: f64,
    /// The classes are perfectly separated; estimates near 0 or 1 are
    /// expected and only the clipping threshold keeps weights bounded.
    pub separable: bool,
}

/// Fit `P(treated | state)` by full-batch gradient descent on standardized
/// features until the loss changes by less than 1e-8 or 10^4 iterations.
pub fn fit_propensity(history: &[(ExpAgentState, bool)]) -> Result<PropensityFit, FeedbackError> {
    let n_treated = history.iter().filter(|(_, t)| *t).count();
    if n_treated == 0 || n_treated == history.len() {
        log::warn!("propensity fit on {} samples with {n_treated} treated", history.len());
        return Err(FeedbackError::Separable);
    }
    let n = history.len() as f64;
    let xs: Vec<[f64; EXP_FEATURES]> = history.iter().map(|(s, _)| s.features()).collect();
    let ys: Vec<f64> = history.iter().map(|(_, t)| if *t { 1.0 } else { 0.0 }).collect();

    let mut mu = [0.0; EXP_FEATURES];
    let mut sd = [0.0; EXP_FEATURES];
    for k in 0..EXP_FEATURES {
        mu[k] = xs.iter().map(|x| x[k]).sum::<f64>() / n;
        let var = xs.iter().map(|x| (x[k] - mu[k]).powi(2)).sum::<f64>() / n;
        // constant features carry no information; leave them unscaled
        sd[k] = if var > 1e-24 { var.sqrt() } else { 0.0 };
    }
    let z: Vec<[f64; EXP_FEATURES]> = xs
        .iter()
        .map(|x| std::array::from_fn(|k| if sd[k] > 0.0 { (x[k] - mu[k]) / sd[k] } else { 0.0 }))
        .collect();

    let loss_of = |b: f64, w: &[f64; EXP_FEATURES]| -> f64 {
        z.iter()
            .zip(&ys)
            .map(|(x, y)| {
                let m = b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
                // log(1 + e^m) - y m, computed stably
                m.max(0.0) + (-m.abs()).exp().ln_1p() - y * m
            })
            .sum::<f64>()
            / n
    };

    let mut b = (n_treated as f64 / (n - n_treated as f64)).ln();
    let mut w = [0.0; EXP_FEATURES];
    let mut loss = loss_of(b, &w);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut gb = 0.0;
        let mut gw = [0.0; EXP_FEATURES];
        for (x, y) in z.iter().zip(&ys) {
            let r = sigmoid(b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()) - y;
            gb += r;
            for k in 0..EXP_FEATURES {
                gw[k] += r * x[k];
            }
        }
        b -= STEP * gb / n;
        for k in 0..EXP_FEATURES {
            w[k] -= STEP * gw[k] / n;
        }
        let next = loss_of(b, &w);
        let delta = (loss - next).abs();
        loss = next;
        if delta < TOLERANCE {
            break;
        }
    }

    // undo the standardization
    let mut weights = [0.0; EXP_FEATURES];
    let mut bias = b;
    for k in 0..EXP_FEATURES {
        if sd[k] > 0.0 {
            weights[k] = w[k] / sd[k];
            bias -= w[k] * mu[k] / sd[k];
        }
    }
    let model = LogisticModel { bias, weights };
    let separable = xs.iter().zip(&ys).all(|(x, y)| (model.predict_features(x) > 0.5) == (*y > 0.5));
    if separable {
        log::warn!("treatment is perfectly separable by the state; relying on propensity clipping");
    }
    Ok(PropensityFit { model, iterations, loss, separable })
}
