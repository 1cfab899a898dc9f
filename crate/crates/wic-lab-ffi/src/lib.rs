//! C ABI over the wic-lab core: opaque handles, integer status codes, and a
//! thread-local last-error message. The generated header lives in
//! `include/wic_lab.h`.
//!
//! Ownership rules: every `*_new`/`*_from_*`/`*_train` function returns a
//! handle the caller must release with the matching `*_free`; strings passed
//! in are borrowed NUL-terminated UTF-8 and never retained.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use wic_lab::config::{ExperimentConfig, Method};
use wic_lab::grid::GridState;
use wic_lab::ot::{exact_w1, FiniteDistribution};
use wic_lab::report::endpoint_report;
use wic_lab::runner::{run_experiment, TrainedRun};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum WicLabStatus {
    WicLabOk = 0,
    /// A caller-supplied pointer was null.
    WicLabNullPointer = 1,
    /// A caller-supplied string was not valid UTF-8.
    WicLabInvalidUtf8 = 2,
    /// A configuration field was rejected.
    WicLabConfigError = 3,
    /// An API precondition was violated.
    WicLabContractError = 4,
    WicLabIoError = 5,
    WicLabParseError = 6,
    /// The core library panicked; the handle state is unspecified.
    WicLabInternalError = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized: Vec<u8> = message.bytes().filter(|&b| b != 0).collect();
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &wic_lab::Error) -> WicLabStatus {
    match err {
        wic_lab::Error::Contract(_) => WicLabStatus::WicLabContractError,
        wic_lab::Error::Config { .. } => WicLabStatus::WicLabConfigError,
        wic_lab::Error::Io(_) => WicLabStatus::WicLabIoError,
        wic_lab::Error::Parse(_) => WicLabStatus::WicLabParseError,
    }
}

fn guard<F: FnOnce() -> WicLabStatus>(f: F) -> WicLabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            WicLabStatus::WicLabInternalError
        }
    }
}

unsafe fn borrow_str<'a>(ptr: *const c_char) -> Result<&'a str, WicLabStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(WicLabStatus::WicLabNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        WicLabStatus::WicLabInvalidUtf8
    })
}

/// Copies the last error message for the calling thread into `buf`
/// (NUL-terminated, truncated to `len`). Returns the full message length
/// in bytes, excluding the NUL.
#[no_mangle]
pub unsafe extern "C" fn wic_lab_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Opaque experiment configuration.
pub struct WicLabConfig {
    inner: ExperimentConfig,
}

/// Opaque trained run: the policy, baseline, and objective model produced by
/// `wic_lab_train`, plus the logged metrics.
pub struct WicLabRun {
    inner: TrainedRun,
    config: ExperimentConfig,
}

fn parse_method(method: u32) -> Result<Method, WicLabStatus> {
    match method {
        0 => Ok(Method::Wic),
        1 => Ok(Method::Vic),
        _ => {
            set_error("method must be 0 (wic) or 1 (vic)");
            Err(WicLabStatus::WicLabConfigError)
        }
    }
}

/// Creates a config with the tabular 15x15 experiment defaults.
/// `method` is 0 for the Wasserstein objective, 1 for the variational one.
#[no_mangle]
pub extern "C" fn wic_lab_config_tabular15(method: u32) -> *mut WicLabConfig {
    match parse_method(method) {
        Ok(m) => Box::into_raw(Box::new(WicLabConfig {
            inner: ExperimentConfig::tabular15(m),
        })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Creates a config with the four-rooms experiment defaults.
#[no_mangle]
pub extern "C" fn wic_lab_config_four_rooms(method: u32) -> *mut WicLabConfig {
    match parse_method(method) {
        Ok(m) => Box::into_raw(Box::new(WicLabConfig {
            inner: ExperimentConfig::four_rooms(m),
        })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Parses a flat `key = value` config file. Returns null on failure; call
/// `wic_lab_last_error` for the reason.
#[no_mangle]
pub unsafe extern "C" fn wic_lab_config_from_file(path: *const c_char) -> *mut WicLabConfig {
    let mut out: *mut WicLabConfig = std::ptr::null_mut();
    let code = guard(|| {
        let path = match borrow_str(path) {
            Ok(s) => s,
            Err(c) => return c,
        };
        match ExperimentConfig::from_file(&PathBuf::from(path)) {
            Ok(cfg) => {
                out = Box::into_raw(Box::new(WicLabConfig { inner: cfg }));
                WicLabStatus::WicLabOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    });
    let _ = code;
    out
}

/// Sets one config field by key, e.g. `wic_lab_config_set(c, "seed", "3")`.
#[no_mangle]
pub unsafe extern "C" fn wic_lab_config_set(
    cfg: *mut WicLabConfig,
    key: *const c_char,
    value: *const c_char,
) -> WicLabStatus {
    guard(|| {
        if cfg.is_null() {
            set_error("null config handle");
            return WicLabStatus::WicLabNullPointer;
        }
        let (key, value) = match (borrow_str(key), borrow_str(value)) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(c), _) | (_, Err(c)) => return c,
        };
        match (*cfg).inner.set(key, value).and_then(|()| (*cfg).inner.validate()) {
            Ok(()) => WicLabStatus::WicLabOk,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn wic_lab_config_free(cfg: *mut WicLabConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Trains the configured experiment, writing metrics and checkpoints under
/// `out_dir`, and returns a handle to the trained artifacts via `out_run`.
#[no_mangle]
pub unsafe extern "C" fn wic_lab_train(
    cfg: *const WicLabConfig,
    out_dir: *const c_char,
    out_run: *mut *mut WicLabRun,
) -> WicLabStatus {
    guard(|| {
        if cfg.is_null() || out_run.is_null() {
            set_error("null handle argument");
            return WicLabStatus::WicLabNullPointer;
        }
        let dir = match borrow_str(out_dir) {
            Ok(s) => PathBuf::from(s),
            Err(c) => return c,
        };
        let config = (*cfg).inner.clone();
        match run_experiment(&config, &dir) {
            Ok(trained) => {
                *out_run = Box::into_raw(Box::new(WicLabRun {
                    inner: trained,
                    config,
                }));
                WicLabStatus::WicLabOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn wic_lab_run_free(run: *mut WicLabRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Final logged metrics of a trained run.
#[no_mangle]
pub unsafe extern "C" fn wic_lab_run_final_metrics(
    run: *const WicLabRun,
    mean_episodic_coverage: *mut f64,
    lifetime_coverage: *mut u64,
    mean_return: *mut f64,
) -> WicLabStatus {
    guard(|| {
        if run.is_null() {
            set_error("null run handle");
            return WicLabStatus::WicLabNullPointer;
        }
        let Some(last) = (*run).inner.record.rows.last() else {
            set_error("run has no logged rows");
            return WicLabStatus::WicLabContractError;
        };
        if !mean_episodic_coverage.is_null() {
            *mean_episodic_coverage = last.mean_episodic_coverage;
        }
        if !lifetime_coverage.is_null() {
            *lifetime_coverage = last.lifetime_coverage as u64;
        }
        if !mean_return.is_null() {
            *mean_return = last.mean_return;
        }
        WicLabStatus::WicLabOk
    })
}

/// Rolls out the trained policy `rollouts` times per skill and reports the
/// mean shortest-path distance from start to endpoint for one skill.
#[no_mangle]
pub unsafe extern "C" fn wic_lab_run_endpoint_distance(
    run: *const WicLabRun,
    skill: usize,
    rollouts: usize,
    eval_seed: u64,
    out_mean_distance: *mut f64,
) -> WicLabStatus {
    guard(|| {
        if run.is_null() || out_mean_distance.is_null() {
            set_error("null argument");
            return WicLabStatus::WicLabNullPointer;
        }
        let run = &*run;
        if skill >= run.config.k {
            set_error("skill index out of range");
            return WicLabStatus::WicLabContractError;
        }
        let spec = run.config.grid_spec();
        let mut cfg = run.config.clone();
        cfg.eval_rollouts = rollouts;
        match endpoint_report(&spec, &run.inner.policy, &cfg, rollouts, eval_seed) {
            Ok(rows) => {
                let picked: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.skill == skill)
                    .map(|r| r.distance)
                    .collect();
                if picked.is_empty() {
                    set_error("no rollouts for the requested skill");
                    return WicLabStatus::WicLabContractError;
                }
                *out_mean_distance = picked.iter().sum::<f64>() / picked.len() as f64;
                WicLabStatus::WicLabOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Exact 1-Wasserstein distance between two weighted point sets on a named
/// grid (`environment`: 0 = open 15x15, 1 = four rooms) under the
/// shortest-path metric. Cells are `row * width + col` indices; weights must
/// each sum to 1.
#[no_mangle]
pub unsafe extern "C" fn wic_lab_grid_w1(
    environment: u32,
    mu_cells: *const usize,
    mu_weights: *const f64,
    mu_len: usize,
    nu_cells: *const usize,
    nu_weights: *const f64,
    nu_len: usize,
    out_distance: *mut f64,
) -> WicLabStatus {
    guard(|| {
        if mu_cells.is_null()
            || mu_weights.is_null()
            || nu_cells.is_null()
            || nu_weights.is_null()
            || out_distance.is_null()
        {
            set_error("null array argument");
            return WicLabStatus::WicLabNullPointer;
        }
        let spec = match environment {
            0 => wic_lab::grid::GridSpec::open15(),
            1 => wic_lab::grid::GridSpec::four_rooms(),
            _ => {
                set_error("environment must be 0 (open 15x15) or 1 (four rooms)");
                return WicLabStatus::WicLabConfigError;
            }
        };
        let build = |cells: *const usize, weights: *const f64, len: usize| {
            let cells = std::slice::from_raw_parts(cells, len);
            let weights = std::slice::from_raw_parts(weights, len);
            let mut support = Vec::with_capacity(len);
            for &c in cells {
                let state = GridState {
                    row: c / spec.width,
                    col: c % spec.width,
                };
                if !spec.is_valid(state) {
                    return Err(wic_lab::Error::Contract(format!(
                        "cell index {c} is a wall or out of bounds"
                    )));
                }
                support.push(state);
            }
            FiniteDistribution::new(support, weights.to_vec())
        };
        let made = build(mu_cells, mu_weights, mu_len)
            .and_then(|mu| Ok((mu, build(nu_cells, nu_weights, nu_len)?)));
        let (mu, nu) = match made {
            Ok(pair) => pair,
            Err(e) => {
                set_error(&e.to_string());
                return status_of(&e);
            }
        };
        // a disconnected pair yields an infinite metric entry, which the
        // solver rejects with a contract error
        let metric = |a: GridState, b: GridState| {
            match spec.bfs_distance(a, b) {
                Ok(Some(d)) => d as f64,
                _ => f64::INFINITY,
            }
        };
        match exact_w1(&mu, &nu, metric) {
            Ok((distance, _plan)) => {
                *out_distance = distance;
                WicLabStatus::WicLabOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}
