//! Score-function (REINFORCE) accumulation shared by the trainer and the
//! two-arm bandit used to check it.

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Accumulate `scale * (q - baseline) * score` into `grad`.
pub fn accumulate(grad: &mut [f64], q: f64, baseline: f64, scale: f64, score: &[f64]) {
    let w = (q - baseline) * scale;
    for (g, s) in grad.iter_mut().zip(score) {
        *g += w * s;
    }
}

/// Two arms with Gaussian rewards under a softmax policy on two logits.
#[derive(Debug, Clone, Copy)]
pub struct TwoArmBandit {
    pub means: [f64; 2],
    pub noise_sd: f64,
}

/// REINFORCE estimate with its per-component standard error.
#[derive(Debug, Clone, Copy)]
pub struct BanditEstimate {
    pub grad: [f64; 2],
    pub std_err: [f64; 2],
}

pub fn softmax2(theta: [f64; 2]) -> [f64; 2] {
    let m = theta[0].max(theta[1]);
    let e = [(theta[0] - m).exp(), (theta[1] - m).exp()];
    let z = e[0] + e[1];
    [e[0] / z, e[1] / z]
}

impl TwoArmBandit {
    /// Gradient of the expected reward from `samples` pulls.
    pub fn reinforce<R: Rng + ?Sized>(&self, theta: [f64; 2], samples: usize, rng: &mut R) -> BanditEstimate {
        let p = softmax2(theta);
        let noise = Normal::new(0.0, self.noise_sd).expect("finite noise");
        let mut sum = [0.0; 2];
        let mut sum_sq = [0.0; 2];
        for _ in 0..samples {
            let arm = usize::from(rng.random::<f64>() >= p[0]);
            let r = self.means[arm] + noise.sample(rng);
            let score = [f64::from(arm == 0) - p[0], f64::from(arm == 1) - p[1]];
            let mut g = [0.0; 2];
            accumulate(&mut g, r, 0.0, 1.0, &score);
            for i in 0..2 {
                sum[i] += g[i];
                sum_sq[i] += g[i] * g[i];
            }
        }
        let n = samples as f64;
        let mut out = BanditEstimate { grad: [0.0; 2], std_err: [0.0; 2] };
        for i in 0..2 {
            let mean = sum[i] / n;
            let var = (sum_sq[i] / n - mean * mean) * n / (n - 1.0);
            out.grad[i] = mean;
            out.std_err[i] = (var / n).sqrt();
        }
        out
    }
}
