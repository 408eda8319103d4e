//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use agentsim::agents::{PolicyArch, WorldPolicy, WorldState};
use agentsim::seed;
use rand::Rng;

/// Gram matrix of `k` over two samples.
fn gram(a: &[f64], b: &[f64], k: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
    a.iter().map(|x| b.iter().map(|y| k(*x, *y)).collect()).collect()
}

fn off_diagonal_mean(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut s = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                s += v;
            }
        }
    }
    s / (n * (n - 1)) as f64
}

fn full_mean(m: &[Vec<f64>]) -> f64 {
    let cells = m.len() * m[0].len();
    m.iter().flatten().sum::<f64>() / cells as f64
}

/// Median of all pooled pairwise absolute differences, by full sort.
pub fn median_distance(xs: &[f64], ys: &[f64]) -> f64 {
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let mut d = Vec::new();
    for i in 0..pooled.len() {
        for j in 0..i {
            d.push((pooled[i] - pooled[j]).abs());
        }
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        (d[n / 2 - 1] + d[n / 2]) / 2.0
    }
}

pub fn mmd_gaussian(xs: &[f64], ys: &[f64], sigma: f64) -> f64 {
    let k = |x: f64, y: f64| (-(x - y).powi(2) / (2.0 * sigma * sigma)).exp();
    off_diagonal_mean(&gram(xs, xs, k)) + off_diagonal_mean(&gram(ys, ys, k)) - 2.0 * full_mean(&gram(xs, ys, k))
}

pub fn mmd_linear(xs: &[f64], ys: &[f64]) -> f64 {
    let k = |x: f64, y: f64| x * y;
    off_diagonal_mean(&gram(xs, xs, k)) + off_diagonal_mean(&gram(ys, ys, k)) - 2.0 * full_mean(&gram(xs, ys, k))
}

pub fn energy(xs: &[f64], ys: &[f64]) -> f64 {
    let d = |x: f64, y: f64| (x - y).powi(2);
    off_diagonal_mean(&gram(xs, xs, d)) - 2.0 * full_mean(&gram(xs, ys, d)) + off_diagonal_mean(&gram(ys, ys, d))
}

/// `int_0^1 |F^-1(u) - G^-1(u)| du` over the merged quantile breakpoints.
pub fn emd_quantile(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (0..=a.len()).map(|k| k as f64 / a.len() as f64).collect();
    cuts.extend((0..=b.len()).map(|k| k as f64 / b.len() as f64));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let quantile = |s: &[f64], u: f64| s[((u * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
    cuts.windows(2)
        .map(|w| {
            let mid = (w[0] + w[1]) / 2.0;
            (quantile(&a, mid) - quantile(&b, mid)).abs() * (w[1] - w[0])
        })
        .sum()
}

/// A uniform sample with a size drawn from `n`.
pub fn sample<R: Rng>(rng: &mut R, n: std::ops::Range<usize>, shift: f64, scale: f64) -> Vec<f64> {
    let n = rng.random_range(n);
    (0..n).map(|_| shift + scale * rng.random_range(-1.0..1.0)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Largest relative error of the analytic score against central differences
/// over `cases` random (theta, S, A).
pub fn worst_gradient_error(cases: usize, master: u64) -> f64 {
    let arch = PolicyArch::default();
    let mut rng = seed::rng(master);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let p = WorldPolicy::random(arch.clone(), rng.random_range(0.5..3.0), &mut rng);
        let s = WorldState {
            features: (0..arch.input_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            cancel_slots: rng.random_range(0..=arch.cancel_slots),
        };
        let acts = p.enumerate_actions(&s);
        let a = acts[rng.random_range(0..acts.len())];
        let (_, g) = p.log_prob_grad(&s, &a).unwrap();
        let h = 1e-6;
        let mut diff = 0.0;
        let mut norm = 0.0;
        let mut probe = p.clone();
        for i in 0..p.len() {
            probe.theta[i] = p.theta[i] + h;
            let up = probe.log_prob(&s, &a).unwrap();
            probe.theta[i] = p.theta[i] - h;
            let dn = probe.log_prob(&s, &a).unwrap();
            probe.theta[i] = p.theta[i];
            let fd = (up - dn) / (2.0 * h);
            diff += (fd - g[i]).powi(2);
            norm += fd * fd;
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-12));
    }
    worst
}

/// Seeds (out of `seeds`) on which the IPW batch estimate lands closer to
/// the randomized-action truth than the naive one.
pub fn ipw_wins(seeds: u64, rollouts: usize) -> (usize, f64) {
    use agentsim::feedback::synthetic::{estimate_batch, randomized_truth, Behavior, ConfoundedMdp};
    use agentsim::feedback::{IpwNormalization, DEFAULT_PS_THRESHOLD};
    let mdp = ConfoundedMdp::default();
    let truth = randomized_truth(&mdp, 50_000, seed::derive(0, &[seed::stream::EVAL])).unwrap();
    let wins = (0..seeds)
        .filter(|&s| {
            let e = estimate_batch(&mdp, Behavior::Confounded, rollouts, DEFAULT_PS_THRESHOLD, IpwNormalization::SelfNormalized, s)
                .unwrap();
            (e.ipw - truth).abs() < (e.naive - truth).abs()
        })
        .count();
    (wins, truth)
}

/// Mean IPW and naive feedbacks of the same real rollouts under a
/// state-independent execution policy, with the standard error of the
/// paired difference.
pub fn zero_intelligence_gap(rollouts: u64) -> (f64, f64, f64) {
    use agentsim::agents::{BgPopulationConfig, ExpPolicy};
    use agentsim::env::{run_rollout, SimConfig};
    use agentsim::feedback::{collect_feedback, Estimator, FeedbackKind, FeedbackSpec};
    let mut sim = SimConfig::real(BgPopulationConfig::default());
    sim.exp.policy = ExpPolicy::UniformRandom;
    let runs: Vec<_> = (0..rollouts).map(|s| run_rollout(&sim, seed::derive(3, &[s])).unwrap()).collect();
    let ipw_spec = FeedbackSpec::new(FeedbackKind::Mkt2NextReturn);
    let naive_spec = FeedbackSpec { estimator: Estimator::Naive, ..ipw_spec.clone() };
    let ipw = collect_feedback(&runs, &ipw_spec, &sim.exp.policy).unwrap().values();
    let naive = collect_feedback(&runs, &naive_spec, &sim.exp.policy).unwrap().values();
    assert_eq!(ipw.len(), naive.len());
    let n = ipw.len() as f64;
    let d: Vec<f64> = ipw.iter().zip(&naive).map(|(a, b)| a - b).collect();
    let mean_d = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean_d).powi(2)).sum::<f64>() / (n - 1.0);
    (ipw.iter().sum::<f64>() / n, naive.iter().sum::<f64>() / n, (var / n).sqrt())
}

/// Self-calibration run: the real market is a world environment driven by a
/// frozen random reference policy, and training starts from that policy
/// with its kind and side biases pushed towards buy market orders.
/// Returns the evaluation distance before and after training.
pub fn self_calibration(master: u64, iterations: usize, parallel: bool) -> (f64, f64) {
    use agentsim::agents::BgPopulationConfig;
    use agentsim::env::SimConfig;
    use agentsim::seed::stream;
    use agentsim::trainer::{feedback_pool, TrainConfig, Trainer};
    let reference = WorldPolicy::random(PolicyArch::default(), 0.5, &mut seed::rng(seed::derive(master, &[stream::INIT])));
    let real_sim = SimConfig::world(reference.clone(), BgPopulationConfig { noise: 10, ..BgPopulationConfig::empty() }, 10);
    let cfg = TrainConfig { iterations, parallel, seed: master, ..TrainConfig::default() };
    let real = feedback_pool(&real_sim, &cfg.feedback, cfg.n_real, master, stream::REAL, parallel).unwrap().values();
    let mut init = reference;
    init.shift_bias([0.0, 4.0, 0.0, 0.0], [4.0, 0.0]);
    let out = Trainer { sim: &real_sim, cfg: &cfg, real: &real }.train(&init, None).unwrap();
    (out.initial_d_f.unwrap(), out.final_d_f().unwrap())
}
