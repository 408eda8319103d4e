mod common;

use agentsim::agents::{BgPopulationConfig, ExpPolicy};
use agentsim::env::{run_rollout, SimConfig};
use agentsim::feedback::synthetic::{estimate_batch, Behavior, ConfoundedMdp};
use agentsim::feedback::*;

#[test]
fn ipw_beats_naive_under_confounding() {
    let (wins, truth) = common::ipw_wins(200, 200);
    assert!((truth - ConfoundedMdp::default().beta).abs() < 0.02);
    assert!(wins >= 180, "{wins}/200");
}

#[test]
fn randomized_behavior_makes_estimators_agree() {
    let mdp = ConfoundedMdp::default();
    let e = estimate_batch(&mdp, Behavior::Randomized(0.4), 500, 0.05, IpwNormalization::SelfNormalized, 1).unwrap();
    assert!((e.ipw - e.naive).abs() < 1e-12);
    let e = estimate_batch(&mdp, Behavior::Randomized(0.4), 2_000, 0.05, IpwNormalization::AsPrinted, 1).unwrap();
    // unnormalized weights 1/0.4 inflate the estimate by exactly 2.5
    assert!((e.ipw - 2.5 * e.naive).abs() < 1e-9);
}

#[test]
fn zero_intelligence_ipw_matches_naive() {
    let (ipw, naive, se) = common::zero_intelligence_gap(100);
    assert!((ipw - naive).abs() <= 3.0 * se + 1e-12, "{ipw} vs {naive} (se {se})");
}

#[test]
fn estimator_edge_cases() {
    let obs = [Obs { treated: false, outcome: 1.0, propensity: 0.5 }];
    assert!(matches!(naive_estimate(&obs), Err(FeedbackError::NoTreatedSteps)));
    let obs = [Obs { treated: true, outcome: 2.0, propensity: 0.0 }];
    assert!(matches!(ipw_estimate(&obs, 0.05, IpwNormalization::SelfNormalized), Err(FeedbackError::DegeneratePropensity(_))));
    // the threshold clips tiny propensities
    let obs = [
        Obs { treated: true, outcome: 1.0, propensity: 0.001 },
        Obs { treated: true, outcome: 3.0, propensity: 0.5 },
        Obs { treated: false, outcome: 9.0, propensity: 0.5 },
    ];
    let (v, n) = ipw_estimate(&obs, 0.1, IpwNormalization::AsPrinted).unwrap();
    assert_eq!(n, 2);
    assert!((v - (10.0 + 6.0) / 2.0).abs() < 1e-12);
    let (v, _) = ipw_estimate(&obs, 0.1, IpwNormalization::Horizon).unwrap();
    assert!((v - 16.0 / 3.0).abs() < 1e-12);
    let (v, _) = ipw_estimate(&obs, 0.1, IpwNormalization::SelfNormalized).unwrap();
    assert!((v - 16.0 / 12.0).abs() < 1e-12);
    assert!(FeedbackSpec { ps_threshold: 0.0, ..Default::default() }.validate().is_err());
}

#[test]
fn kind_names_round_trip() {
    for kind in [
        FeedbackKind::EpisodeReward,
        FeedbackKind::Mkt2NextReturn,
        FeedbackKind::Mkt2NextPriceImpact,
        FeedbackKind::Mkt2NextSpread,
        FeedbackKind::Mkt2NextImbalance(agentsim::lob::LevelCount::Top(3)),
        FeedbackKind::Mkt2NextImbalance(agentsim::lob::LevelCount::All),
        FeedbackKind::Mkt2NextDirection,
        FeedbackKind::Mkt2Reward,
    ] {
        assert_eq!(FeedbackKind::parse(&kind.name()), Some(kind));
    }
    assert_eq!(FeedbackKind::parse("Mkt2Next"), None);
}

#[test]
fn feedback_csv_round_trips_and_drops_untreated_rollouts() {
    let mut sim = SimConfig::real(BgPopulationConfig::default());
    sim.exp.policy = ExpPolicy::AlwaysHold;
    let runs: Vec<_> = (0..5).map(|s| run_rollout(&sim, s).unwrap()).collect();
    let spec = FeedbackSpec::new(FeedbackKind::Mkt2NextReturn);
    let set = collect_feedback(&runs, &spec, &sim.exp.policy).unwrap();
    assert_eq!((set.samples.len(), set.dropped), (0, 5));
    let reward = collect_feedback(&runs, &FeedbackSpec::new(FeedbackKind::EpisodeReward), &sim.exp.policy).unwrap();
    assert_eq!(reward.samples.len(), 5);

    sim.exp.policy = ExpPolicy::UniformRandom;
    let runs: Vec<_> = (0..20).map(|s| run_rollout(&sim, s).unwrap()).collect();
    let set = collect_feedback(&runs, &spec, &sim.exp.policy).unwrap();
    let mut buf = Vec::new();
    write_feedback_csv(&mut buf, 4, &spec, &set).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with('#'));
    let back = read_feedback_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), set.samples.len());
    for ((kind, est, s), want) in back.iter().zip(&set.samples) {
        assert_eq!((kind.as_str(), est.as_str()), ("Mkt2NextReturn", "ipw"));
        assert_eq!(s, want);
    }
}

#[test]
fn fitted_propensities_track_the_exact_ones() {
    let mut sim = SimConfig::real(BgPopulationConfig::default());
    let mut weights = [0.0; agentsim::agents::exp::EXP_FEATURES];
    weights[0] = 1.5;
    weights[1] = -1.0;
    sim.exp.policy = ExpPolicy::Logistic { bias: -0.5, weights };
    let runs: Vec<_> = (0..400).map(|s| run_rollout(&sim, s).unwrap()).collect();
    let history: Vec<_> = runs
        .iter()
        .flat_map(|r| r.steps.iter().filter(|s| s.s_prev.remaining_frac > 0.0).map(|s| (s.s_prev, s.a.is_treated())))
        .collect();
    let fit = fit_propensity(&history).unwrap();
    let devs: Vec<f64> = history.iter().map(|(s, _)| (fit.model.predict(s) - sim.exp.policy.propensity(s)).abs()).collect();
    let mean_dev = devs.iter().sum::<f64>() / devs.len() as f64;
    assert!(mean_dev < 0.03, "{mean_dev}");
}
