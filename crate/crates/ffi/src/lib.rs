//! C interface to the simulator: experiment configs, rollouts, feedbacks and
//! sample distances behind opaque handles.
//!
//! Every fallible function returns an `AgsStatus` code. On failure the
//! message is kept per thread and can be copied out with
//! [`ags_last_error`]. Handles must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use agentsim::config::ExperimentConfig;
use agentsim::env::{EnvTag, Rollout};
use agentsim::experiment;
use agentsim::metric::{energy_distance, mmd_u, KernelSpec};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    Runtime = 3,
    InvalidArgument = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Environment selector for [`ags_rollouts_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgsEnv {
    Real = 0,
    World = 1,
}

/// Opaque experiment configuration.
pub struct AgsConfig(ExperimentConfig);

/// Opaque set of rollouts.
pub struct AgsRollouts(Vec<Rollout>);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: AgsStatus, msg: impl Into<String>) -> AgsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn guarded<F: FnOnce() -> AgsStatus>(f: F) -> AgsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(AgsStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, AgsStatus> {
    if p.is_null() {
        return Err(fail(AgsStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(AgsStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn slice_arg<'a>(p: *const f64, n: usize) -> Result<&'a [f64], AgsStatus> {
    if p.is_null() {
        return Err(fail(AgsStatus::NullPointer, "null sample pointer"));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn experiment_status(e: &experiment::ExperimentError) -> AgsStatus {
    match e {
        experiment::ExperimentError::Config(_) => AgsStatus::InvalidConfig,
        _ => AgsStatus::Runtime,
    }
}

/// Copy the calling thread's last error message into `buf` as a
/// NUL-terminated string. Returns the message length without the NUL; the
/// copy is truncated when `cap` is too small.
///
/// # Safety
/// `buf` must be valid for `cap` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn ags_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Default experiment configuration.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ags_config_default(out: *mut *mut AgsConfig) -> AgsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(AgsStatus::NullPointer, "null output handle");
        }
        *out = Box::into_raw(Box::new(AgsConfig(ExperimentConfig::default())));
        AgsStatus::Ok
    })
}

/// Parse a configuration from JSON text. Missing fields take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ags_config_from_json(json: *const c_char, out: *mut *mut AgsConfig) -> AgsStatus {
    guarded(|| {
        let text = match str_arg(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(AgsStatus::NullPointer, "null output handle");
        }
        let cfg: ExperimentConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(AgsStatus::InvalidConfig, e.to_string()),
        };
        if let Err(e) = cfg.validate() {
            return fail(AgsStatus::InvalidConfig, e.to_string());
        }
        *out = Box::into_raw(Box::new(AgsConfig(cfg)));
        AgsStatus::Ok
    })
}

/// Apply one `key=value` override, e.g. `"train.lr=0.25"`. The config is
/// left unchanged when the result does not validate.
///
/// # Safety
/// `cfg` must be a live handle and `assignment` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ags_config_set(cfg: *mut AgsConfig, assignment: *const c_char) -> AgsStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_mut() else {
            return fail(AgsStatus::NullPointer, "null config");
        };
        let kv = match str_arg(assignment) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let next = match cfg.0.clone().with_overrides(&[kv]) {
            Ok(c) => c,
            Err(e) => return fail(AgsStatus::InvalidConfig, e.to_string()),
        };
        if let Err(e) = next.validate() {
            return fail(AgsStatus::InvalidConfig, e.to_string());
        }
        cfg.0 = next;
        AgsStatus::Ok
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ags_config_free(cfg: *mut AgsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run `count` seeded rollouts of an environment.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn ags_rollouts_run(
    cfg: *const AgsConfig,
    env: AgsEnv,
    count: usize,
    out: *mut *mut AgsRollouts,
) -> AgsStatus {
    guarded(|| {
        let Some(cfg) = cfg.as_ref() else {
            return fail(AgsStatus::NullPointer, "null config");
        };
        if out.is_null() {
            return fail(AgsStatus::NullPointer, "null output handle");
        }
        let tag = match env {
            AgsEnv::Real => EnvTag::Real,
            AgsEnv::World => EnvTag::World,
        };
        match experiment::collect_rollouts(&cfg.0, tag, count) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(AgsRollouts(r)));
                AgsStatus::Ok
            }
            Err(e) => fail(experiment_status(&e), e.to_string()),
        }
    })
}

/// Number of rollouts in the set; 0 for a null handle.
///
/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ags_rollouts_len(r: *const AgsRollouts) -> usize {
    r.as_ref().map_or(0, |r| r.0.len())
}

/// Total reward of rollout `index`, in currency units.
///
/// # Safety
/// `r` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ags_rollouts_total_reward(r: *const AgsRollouts, index: usize, out: *mut f64) -> AgsStatus {
    guarded(|| {
        let (Some(r), false) = (r.as_ref(), out.is_null()) else {
            return fail(AgsStatus::NullPointer, "null argument");
        };
        match r.0.get(index) {
            Some(ro) => {
                *out = ro.total_reward();
                AgsStatus::Ok
            }
            None => fail(AgsStatus::InvalidArgument, format!("index {index} out of range")),
        }
    })
}

/// Write the rollouts as a JSONL log.
///
/// # Safety
/// `r` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ags_rollouts_write(r: *const AgsRollouts, path: *const c_char) -> AgsStatus {
    guarded(|| {
        let Some(r) = r.as_ref() else {
            return fail(AgsStatus::NullPointer, "null rollouts");
        };
        let path = match str_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match experiment::write_rollout_log(Path::new(path), &r.0) {
            Ok(()) => AgsStatus::Ok,
            Err(e) => fail(AgsStatus::Runtime, e.to_string()),
        }
    })
}

/// # Safety
/// `r` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ags_rollouts_free(r: *mut AgsRollouts) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Per-rollout feedback values under the config's feedback spec. Rollouts
/// without feedback are skipped. `*len` receives the number of values;
/// when it exceeds `cap` nothing is written and `BufferTooSmall` returned.
///
/// # Safety
/// `values` must be valid for `cap` writes (or null with `cap == 0`) and
/// `len` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ags_feedback_values(
    cfg: *const AgsConfig,
    r: *const AgsRollouts,
    values: *mut f64,
    cap: usize,
    len: *mut usize,
) -> AgsStatus {
    guarded(|| {
        let (Some(cfg), Some(r), false) = (cfg.as_ref(), r.as_ref(), len.is_null()) else {
            return fail(AgsStatus::NullPointer, "null argument");
        };
        let set = match experiment::rollout_feedbacks(&cfg.0, &cfg.0.feedback, &r.0) {
            Ok(s) => s.values(),
            Err(e) => return fail(experiment_status(&e), e.to_string()),
        };
        *len = set.len();
        if set.len() > cap {
            return fail(AgsStatus::BufferTooSmall, format!("need {} values", set.len()));
        }
        if !set.is_empty() {
            if values.is_null() {
                return fail(AgsStatus::NullPointer, "null value buffer");
            }
            std::ptr::copy_nonoverlapping(set.as_ptr(), values, set.len());
        }
        AgsStatus::Ok
    })
}

/// Unbiased MMD^2 with a Gaussian kernel whose bandwidth is the median
/// pooled distance.
///
/// # Safety
/// `xs` and `ys` must be valid for `nx` and `ny` reads; `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn ags_mmd(xs: *const f64, nx: usize, ys: *const f64, ny: usize, out: *mut f64) -> AgsStatus {
    distance(xs, nx, ys, ny, out, |a, b| mmd_u(a, b, &KernelSpec::default()))
}

/// Energy distance between two samples.
///
/// # Safety
/// Same as [`ags_mmd`].
#[no_mangle]
pub unsafe extern "C" fn ags_energy_distance(xs: *const f64, nx: usize, ys: *const f64, ny: usize, out: *mut f64) -> AgsStatus {
    distance(xs, nx, ys, ny, out, energy_distance)
}

unsafe fn distance<F>(xs: *const f64, nx: usize, ys: *const f64, ny: usize, out: *mut f64, f: F) -> AgsStatus
where
    F: Fn(&[f64], &[f64]) -> Result<f64, agentsim::metric::MetricError>,
{
    guarded(|| {
        let (a, b) = match (slice_arg(xs, nx), slice_arg(ys, ny)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        if out.is_null() {
            return fail(AgsStatus::NullPointer, "null output");
        }
        match f(a, b) {
            Ok(d) => {
                *out = d;
                AgsStatus::Ok
            }
            Err(e) => fail(AgsStatus::InvalidArgument, e.to_string()),
        }
    })
}
