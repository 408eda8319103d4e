use std::ffi::CString;
use std::ptr;

use agentsim_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    let n = unsafe { ags_last_error(buf.as_mut_ptr().cast(), buf.len()) };
    buf.truncate(n.min(255));
    String::from_utf8(buf).unwrap()
}

fn config(sets: &[&str]) -> *mut AgsConfig {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { ags_config_default(&mut cfg) }, AgsStatus::Ok);
    for s in sets {
        let s = CString::new(*s).unwrap();
        assert_eq!(unsafe { ags_config_set(cfg, s.as_ptr()) }, AgsStatus::Ok, "{}", last_error());
    }
    cfg
}

#[test]
fn rollouts_and_feedback_round_trip() {
    let cfg = config(&["seed=3"]);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { ags_rollouts_run(cfg, AgsEnv::Real, 8, &mut r) }, AgsStatus::Ok);
    assert_eq!(unsafe { ags_rollouts_len(r) }, 8);
    let mut reward = f64::NAN;
    assert_eq!(unsafe { ags_rollouts_total_reward(r, 0, &mut reward) }, AgsStatus::Ok);
    assert!(reward.is_finite());
    assert_eq!(unsafe { ags_rollouts_total_reward(r, 8, &mut reward) }, AgsStatus::InvalidArgument);

    let mut len = 0usize;
    assert_eq!(unsafe { ags_feedback_values(cfg, r, ptr::null_mut(), 0, &mut len) }, AgsStatus::BufferTooSmall);
    assert!(len > 0 && len <= 8);
    let mut values = vec![0.0; len];
    assert_eq!(unsafe { ags_feedback_values(cfg, r, values.as_mut_ptr(), len, &mut len) }, AgsStatus::Ok);
    assert!(values.iter().all(|v| v.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("r.jsonl").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ags_rollouts_write(r, path.as_ptr()) }, AgsStatus::Ok);
    let text = std::fs::read_to_string(dir.path().join("r.jsonl")).unwrap();
    assert!(text.lines().count() > 8);

    unsafe {
        ags_rollouts_free(r);
        ags_config_free(cfg);
    }
}

#[test]
fn world_rollouts_run() {
    let cfg = config(&["world.decisions_per_step=2"]);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { ags_rollouts_run(cfg, AgsEnv::World, 2, &mut r) }, AgsStatus::Ok);
    assert_eq!(unsafe { ags_rollouts_len(r) }, 2);
    unsafe {
        ags_rollouts_free(r);
        ags_config_free(cfg);
    }
}

#[test]
fn bad_config_reports_status_and_message() {
    let cfg = config(&[]);
    let bad = CString::new("train.b=0").unwrap();
    assert_eq!(unsafe { ags_config_set(cfg, bad.as_ptr()) }, AgsStatus::InvalidConfig);
    assert!(last_error().contains("b must be at least 1"), "{}", last_error());
    let unknown = CString::new("nope=1").unwrap();
    assert_eq!(unsafe { ags_config_set(cfg, unknown.as_ptr()) }, AgsStatus::InvalidConfig);

    let json = CString::new("{\"seed\": 5, \"exp\": {\"horizon\": 0}}").unwrap();
    let mut parsed = ptr::null_mut();
    assert_eq!(unsafe { ags_config_from_json(json.as_ptr(), &mut parsed) }, AgsStatus::InvalidConfig);
    assert!(parsed.is_null());
    let json = CString::new("{\"seed\": 5}").unwrap();
    assert_eq!(unsafe { ags_config_from_json(json.as_ptr(), &mut parsed) }, AgsStatus::Ok);
    unsafe {
        ags_config_free(parsed);
        ags_config_free(cfg);
    }
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = 0.0;
    assert_eq!(unsafe { ags_config_default(ptr::null_mut()) }, AgsStatus::NullPointer);
    assert_eq!(unsafe { ags_mmd(ptr::null(), 0, ptr::null(), 0, &mut out) }, AgsStatus::NullPointer);
    assert_eq!(unsafe { ags_rollouts_len(ptr::null()) }, 0);
    unsafe {
        ags_config_free(ptr::null_mut());
        ags_rollouts_free(ptr::null_mut());
    }
}

#[test]
fn distances_match_library() {
    let xs = [0.1, 0.4, -0.3, 1.2];
    let ys = [0.5, 0.9, 1.4];
    let mut d = 0.0;
    assert_eq!(unsafe { ags_mmd(xs.as_ptr(), xs.len(), ys.as_ptr(), ys.len(), &mut d) }, AgsStatus::Ok);
    let want = agentsim::metric::mmd_u(&xs, &ys, &Default::default()).unwrap();
    assert_eq!(d, want);
    assert_eq!(unsafe { ags_energy_distance(xs.as_ptr(), xs.len(), ys.as_ptr(), ys.len(), &mut d) }, AgsStatus::Ok);
    assert_eq!(d, agentsim::metric::energy_distance(&xs, &ys).unwrap());
    assert_eq!(unsafe { ags_mmd(xs.as_ptr(), 1, ys.as_ptr(), 3, &mut d) }, AgsStatus::InvalidArgument);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/agentsim.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.trim().strip_prefix("pub unsafe extern \"C\" fn "))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 10);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct AgsConfig AgsConfig;"));
    assert!(header.contains("AGS_STATUS_BUFFER_TOO_SMALL = 5"));
}
