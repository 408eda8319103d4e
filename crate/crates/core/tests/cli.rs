use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agentsim::config::ExperimentConfig;
use agentsim::env::EnvTag;
use agentsim::experiment;
use agentsim::feedback::FeedbackSpec;

const TRAIN_SETS: [&str; 9] = [
    "train.iterations=2",
    "train.eval_every=1",
    "train.n_mc=2",
    "train.b=1",
    "train.t0=1",
    "train.eval_rollouts=6",
    "world.decisions_per_step=2",
    "exp.horizon=4",
    "seed=3",
];

fn agentsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agentsim")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = agentsim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn with_sets<'a>(mut args: Vec<&'a str>, sets: &[&'a str]) -> Vec<&'a str> {
    for s in sets {
        args.extend(["--set", s]);
    }
    args
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Trace CSV without the wall-clock `seconds` column.
fn trace_without_seconds(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            if cells.len() == 6 {
                cells.remove(4);
            }
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn rollouts_and_feedback_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for env in ["real", "world"] {
        let a = dir.path().join(format!("{env}_a.jsonl"));
        let b = dir.path().join(format!("{env}_b.jsonl"));
        ok(&["rollouts", "--env", env, "--count", "4", "--out", p(&a), "--seed", "5"]);
        ok(&["rollouts", "--env", env, "--count", "4", "--out", p(&b), "--seed", "5"]);
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

        let fa = dir.path().join(format!("{env}_a.csv"));
        let fb = dir.path().join(format!("{env}_b.csv"));
        ok(&["feedback", "--log", p(&a), "--out", p(&fa), "--seed", "5"]);
        ok(&["feedback", "--log", p(&b), "--out", p(&fb), "--seed", "5"]);
        assert_eq!(fs::read(&fa).unwrap(), fs::read(&fb).unwrap());
        let text = fs::read_to_string(&fa).unwrap();
        assert!(text.starts_with("#schema-version=1 seed=5\nkind,estimator,value,n_treated,seed\n"));
    }
}

#[test]
fn commands_match_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cli_log = dir.path().join("cli.jsonl");
    ok(&["rollouts", "--env", "real", "--count", "5", "--out", p(&cli_log), "--set", "seed=8"]);
    let cfg = ExperimentConfig { seed: 8, ..Default::default() };
    let rollouts = experiment::collect_rollouts(&cfg, EnvTag::Real, 5).unwrap();
    let lib_log = dir.path().join("lib.jsonl");
    experiment::write_rollout_log(&lib_log, &rollouts).unwrap();
    assert_eq!(fs::read(&cli_log).unwrap(), fs::read(&lib_log).unwrap());

    let cli_fb = dir.path().join("cli.csv");
    ok(&["feedback", "--log", p(&cli_log), "--kind", "EpisodeReward", "--out", p(&cli_fb), "--seed", "8"]);
    let spec = FeedbackSpec { kind: agentsim::feedback::FeedbackKind::EpisodeReward, ..cfg.feedback.clone() };
    let set = experiment::rollout_feedbacks(&cfg, &spec, &rollouts).unwrap();
    let lib_fb = dir.path().join("lib.csv");
    experiment::write_feedback_file(&lib_fb, 8, &spec, &set).unwrap();
    assert_eq!(fs::read(&cli_fb).unwrap(), fs::read(&lib_fb).unwrap());

    let cli_facts = dir.path().join("cli_facts.csv");
    ok(&["facts-export", "--env", "world", "--count", "2", "--out", p(&cli_facts), "--seed", "8"]);
    let lib_facts = dir.path().join("lib_facts.csv");
    experiment::facts_export(&cfg, EnvTag::World, 2, &lib_facts).unwrap();
    assert_eq!(fs::read(&cli_facts).unwrap(), fs::read(&lib_facts).unwrap());
}

#[test]
fn training_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let real_log = dir.path().join("real.jsonl");
    let real_csv = dir.path().join("real.csv");
    ok(&with_sets(vec!["rollouts", "--env", "real", "--count", "20", "--out", p(&real_log)], &TRAIN_SETS));
    ok(&with_sets(vec!["feedback", "--log", p(&real_log), "--out", p(&real_csv)], &TRAIN_SETS));

    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|r| dir.path().join(r)).collect();
    for out in &runs {
        let od = format!("output_dir={}", p(out));
        ok(&with_sets(vec!["train", "--real", p(&real_csv), "--set", &od], &TRAIN_SETS));
    }
    let (a, b) = (&runs[0], &runs[1]);
    assert_eq!(trace_without_seconds(&a.join("trace.csv")), trace_without_seconds(&b.join("trace.csv")));
    assert_eq!(fs::read(a.join("policy.bin")).unwrap(), fs::read(b.join("policy.bin")).unwrap());
    let ckpts = files_in(&a.join("checkpoints"));
    let facts = files_in(&a.join("facts"));
    // one facts file per checkpoint, named by its iteration
    let policies: Vec<String> = ckpts
        .iter()
        .filter_map(|f| f.file_name()?.to_str()?.strip_prefix("policy_").map(|s| s.replace(".bin", "")))
        .collect();
    assert_eq!(policies, ["00000", "00001", "00002"]);
    let fact_its: Vec<String> =
        facts.iter().map(|f| f.file_name().unwrap().to_str().unwrap().replace("facts_", "").replace(".csv", "")).collect();
    assert_eq!(fact_its, policies);
    for (epoch, f) in facts.iter().enumerate() {
        let name = f.file_name().unwrap();
        assert_eq!(fs::read(f).unwrap(), fs::read(b.join("facts").join(name)).unwrap());
        let text = fs::read_to_string(f).unwrap();
        let first_row = text.lines().nth(2).unwrap();
        assert!(first_row.starts_with(&format!("{epoch},")), "{first_row}");
    }
    let trace = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert!(trace.starts_with("#schema-version=1 seed=3\niteration,D_f,grad_norm,r,seconds,dropped_terms\n0,"));
}

#[test]
fn zero_iterations_export_a_header_only_trace() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("real.jsonl");
    let csv = dir.path().join("real.csv");
    ok(&["rollouts", "--env", "real", "--count", "10", "--out", p(&log)]);
    ok(&["feedback", "--log", p(&log), "--out", p(&csv)]);
    let od = format!("output_dir={}", p(&dir.path().join("run")));
    ok(&["train", "--real", p(&csv), "--set", &od, "--set", "train.iterations=0"]);
    let trace = fs::read_to_string(dir.path().join("run/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    assert!(dir.path().join("run/policy.bin").exists());
}

#[test]
fn empty_rollout_count_writes_an_empty_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("none.jsonl");
    ok(&["rollouts", "--env", "real", "--count", "0", "--out", p(&log)]);
    assert_eq!(fs::read(&log).unwrap(), b"");
}

#[test]
fn separability_writes_both_envelopes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sep.csv");
    let sets = ["separability.pool=12", "separability.ns=[2,3]", "separability.reps=4", "world.decisions_per_step=1"];
    let run = ok(&with_sets(vec!["separability", "--kind", "EpisodeReward", "--out", p(&out)], &sets));
    assert!(String::from_utf8_lossy(&run.stdout).contains("EpisodeReward"));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("d_hat,feedback_kind,N,mean,q5,q95,comparison"));
    assert_eq!(text.lines().count(), 2 + 4);
    assert_eq!(text.lines().filter(|l| l.ends_with("real_vs_real")).count(), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let code = |args: &[&str]| agentsim(args).status.code();
    assert_eq!(code(&["rollouts", "--env", "real", "--count", "1", "--out", p(&out), "--set", "train.b=0"]), Some(2));
    assert_eq!(code(&["rollouts", "--env", "real", "--count", "1", "--out", p(&out), "--set", "no_such_key=1"]), Some(2));
    assert_eq!(code(&["rollouts", "--env", "real", "--count", "1", "--out", p(&out), "--config", "/nonexistent.json"]), Some(2));
    let bad_kind = dir.path().join("f.csv");
    assert_eq!(code(&["feedback", "--log", p(&out), "--kind", "Nope", "--out", p(&bad_kind)]), Some(2));
    assert_eq!(code(&["feedback", "--log", "/nonexistent.jsonl", "--out", p(&bad_kind)]), Some(3));
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "#schema-version=1 seed=0\nkind,estimator,value,n_treated,seed\n").unwrap();
    let od = format!("output_dir={}", p(&dir.path().join("run")));
    assert_eq!(code(&["train", "--real", p(&empty), "--set", &od]), Some(3));
}

#[test]
fn config_file_round_trips_and_matches_overrides() {
    let cfg = ExperimentConfig::default().with_overrides(&["train.lr=0.25", "seed=4", "exp.horizon=6"]).unwrap();
    let json = cfg.to_json();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, &json).unwrap();
    let back = ExperimentConfig::load(&path).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_json(), json);

    let via_file = dir.path().join("file.jsonl");
    let via_sets = dir.path().join("sets.jsonl");
    ok(&["rollouts", "--env", "real", "--count", "2", "--out", p(&via_file), "--config", p(&path)]);
    ok(&["rollouts", "--env", "real", "--count", "2", "--out", p(&via_sets), "--set", "seed=4", "--set", "exp.horizon=6"]);
    assert_eq!(fs::read(&via_file).unwrap(), fs::read(&via_sets).unwrap());
}
