//! C ABI over the hybridmc harness.
//!
//! Handles are opaque and owned by the caller, who releases each with its
//! `_free` function. Every fallible call returns an [`HybmcStatus`]; on
//! failure the message is available from [`hybmc_last_error`] on the same
//! thread until the next failing call. Strings returned by the library stay
//! valid for the lifetime of the handle they came from.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hybridmc::harness::report::{Command, Summary};
use hybridmc::harness::{load_config, run_benchmark, BenchOutcome, ExperimentConfig};
use hybridmc::samplers::Budget;
use hybridmc::target::{GaussianMixture, Target};
use hybridmc::Error;

/// Result codes shared by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HybmcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The config was malformed or failed validation.
    Config = 3,
    /// A file could not be read or written.
    Io = 4,
    /// Sampling failed, or every replicate of a benchmark failed.
    Runtime = 5,
    /// An index or length argument was out of range.
    OutOfRange = 6,
    /// The library panicked; the handle involved should be freed.
    Panic = 7,
}

/// An experiment config.
pub struct HybmcConfig(ExperimentConfig);

/// The outcome of a benchmark: per-replicate reports plus a JSON summary.
pub struct HybmcBench {
    outcome: BenchOutcome,
    labels: Vec<CString>,
    summary: CString,
}

/// The target density of a config.
pub struct HybmcTarget(GaussianMixture);

/// One replicate's measures. Absent optional measures are NaN (`a`, `eta`)
/// or -1 (`n_b`).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybmcReport {
    pub seed: u64,
    pub t: u64,
    pub a: f64,
    pub h: f64,
    pub var_h: f64,
    pub tau: f64,
    pub ess: f64,
    pub n_b: i64,
    pub eta: f64,
    pub wall_clock: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: HybmcStatus, msg: impl Into<String>) -> HybmcStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> HybmcStatus {
    match e {
        Error::Config { .. } | Error::Json(_) | Error::InvalidTarget(_) | Error::NotPositiveDefinite { .. } => {
            HybmcStatus::Config
        }
        Error::Io(_) | Error::Csv(_) | Error::Data { .. } => HybmcStatus::Io,
        Error::IndexOutOfRange { .. } | Error::DimensionMismatch { .. } => HybmcStatus::OutOfRange,
        _ => HybmcStatus::Runtime,
    }
}

fn from_error(e: Error) -> HybmcStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, turning a panic into [`HybmcStatus::Panic`].
fn guard(f: impl FnOnce() -> HybmcStatus) -> HybmcStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        fail(HybmcStatus::Panic, msg)
    })
}

unsafe fn str_arg<'a>(s: *const c_char, name: &str) -> Result<&'a str, HybmcStatus> {
    if s.is_null() {
        return Err(fail(HybmcStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(HybmcStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

fn null(name: &str) -> HybmcStatus {
    fail(HybmcStatus::NullArgument, format!("`{name}` is null"))
}

/// The message of the last failing call on this thread, or null.
#[no_mangle]
pub extern "C" fn hybmc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// The library version as a static string.
#[no_mangle]
pub extern "C" fn hybmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn put_config(cfg: ExperimentConfig, out: *mut *mut HybmcConfig) -> HybmcStatus {
    *out = Box::into_raw(Box::new(HybmcConfig(cfg)));
    HybmcStatus::Ok
}

/// Parses and validates a JSON config.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hybmc_config_from_json(json: *const c_char, out: *mut *mut HybmcConfig) -> HybmcStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let s = match str_arg(json, "json") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match ExperimentConfig::from_json_str(s) {
            Ok(cfg) => put_config(cfg, out),
            Err(e) => from_error(e),
        }
    })
}

/// Reads and validates a JSON config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hybmc_config_load(path: *const c_char, out: *mut *mut HybmcConfig) -> HybmcStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let p = match str_arg(path, "path") {
            Ok(s) => s,
            Err(st) => return st,
        };
        match load_config(p) {
            Ok(cfg) => put_config(cfg, out),
            Err(e) => from_error(e),
        }
    })
}

/// The config as pretty JSON. Free the result with [`hybmc_string_free`].
///
/// # Safety
/// `cfg` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hybmc_config_to_json(cfg: *const HybmcConfig, out: *mut *mut c_char) -> HybmcStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return null(if cfg.is_null() { "cfg" } else { "out" });
        }
        match (*cfg).0.to_json_string() {
            Ok(s) => {
                *out = CString::new(s).unwrap_or_default().into_raw();
                HybmcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

unsafe fn edit(cfg: *mut HybmcConfig, f: impl FnOnce(&mut ExperimentConfig)) -> HybmcStatus {
    guard(|| {
        if cfg.is_null() {
            return null("cfg");
        }
        let mut next = (*cfg).0.clone();
        f(&mut next);
        match next.validate() {
            Ok(()) => {
                (*cfg).0 = next;
                HybmcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Replaces the base seed.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn hybmc_config_set_seed(cfg: *mut HybmcConfig, seed: u64) -> HybmcStatus {
    edit(cfg, |c| c.base_seed = seed)
}

/// Replaces the replicate count. The config is left unchanged if the new
/// value fails validation.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn hybmc_config_set_replicates(cfg: *mut HybmcConfig, replicates: usize) -> HybmcStatus {
    edit(cfg, |c| c.replicates = replicates)
}

/// Replaces the worker count; 0 means the available parallelism.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn hybmc_config_set_workers(cfg: *mut HybmcConfig, workers: usize) -> HybmcStatus {
    edit(cfg, |c| c.workers = (workers > 0).then_some(workers))
}

/// Replaces the budget with a fixed number of iterations per run.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn hybmc_config_set_iterations(cfg: *mut HybmcConfig, iterations: usize) -> HybmcStatus {
    edit(cfg, |c| c.budget = Budget { iterations: Some(iterations), seconds: None })
}

/// # Safety
/// `cfg` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hybmc_config_free(cfg: *mut HybmcConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs every configured algorithm for the configured replicates.
///
/// Returns `Ok` when at least one replicate completed; failed replicates are
/// listed in the summary JSON and counted by [`hybmc_bench_failure_count`].
///
/// # Safety
/// `cfg` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hybmc_run_benchmark(cfg: *const HybmcConfig, out: *mut *mut HybmcBench) -> HybmcStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return null(if cfg.is_null() { "cfg" } else { "out" });
        }
        let cfg = &(*cfg).0;
        let outcome = match run_benchmark(cfg) {
            Ok(o) => o,
            Err(e) => return from_error(e),
        };
        if outcome.reports.is_empty() {
            let first = outcome.failures.first().map(|f| f.error.clone()).unwrap_or_default();
            return fail(HybmcStatus::Runtime, format!("all {} runs failed: {first}", outcome.failures.len()));
        }
        let mut summary = Summary::new(Command::Bench, cfg.base_seed, cfg.replicates);
        summary.algorithms = outcome.summaries.clone();
        summary.failures = outcome.failures.clone();
        let json = match serde_json::to_string_pretty(&summary) {
            Ok(s) => s,
            Err(e) => return from_error(e.into()),
        };
        let labels = outcome
            .reports
            .iter()
            .map(|r| CString::new(r.algorithm.clone()).unwrap_or_default())
            .collect();
        let summary = CString::new(json).unwrap_or_default();
        *out = Box::into_raw(Box::new(HybmcBench { outcome, labels, summary }));
        HybmcStatus::Ok
    })
}

/// Number of completed replicates, 0 for a null handle.
///
/// # Safety
/// `bench` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn hybmc_bench_report_count(bench: *const HybmcBench) -> usize {
    bench.as_ref().map_or(0, |b| b.outcome.reports.len())
}

/// Number of failed replicates, 0 for a null handle.
///
/// # Safety
/// `bench` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn hybmc_bench_failure_count(bench: *const HybmcBench) -> usize {
    bench.as_ref().map_or(0, |b| b.outcome.failures.len())
}

/// Copies report `index` into `out`.
///
/// # Safety
/// `bench` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hybmc_bench_report(bench: *const HybmcBench, index: usize, out: *mut HybmcReport) -> HybmcStatus {
    guard(|| {
        let (Some(b), false) = (bench.as_ref(), out.is_null()) else {
            return null(if bench.is_null() { "bench" } else { "out" });
        };
        let Some(r) = b.outcome.reports.get(index) else {
            return fail(HybmcStatus::OutOfRange, format!("report {index} of {}", b.outcome.reports.len()));
        };
        *out = HybmcReport {
            seed: r.seed,
            t: r.t as u64,
            a: r.a.unwrap_or(f64::NAN),
            h: r.h,
            var_h: r.var_h,
            tau: r.tau,
            ess: r.ess,
            n_b: r.n_b.map_or(-1, |n| n as i64),
            eta: r.eta.unwrap_or(f64::NAN),
            wall_clock: r.wall_clock,
        };
        HybmcStatus::Ok
    })
}

/// Algorithm label of report `index`, or null when out of range.
///
/// # Safety
/// `bench` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn hybmc_bench_algorithm(bench: *const HybmcBench, index: usize) -> *const c_char {
    bench
        .as_ref()
        .and_then(|b| b.labels.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// The benchmark summary as JSON, owned by the handle.
///
/// # Safety
/// `bench` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn hybmc_bench_summary_json(bench: *const HybmcBench) -> *const c_char {
    bench.as_ref().map_or(ptr::null(), |b| b.summary.as_ptr())
}

/// # Safety
/// `bench` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hybmc_bench_free(bench: *mut HybmcBench) {
    if !bench.is_null() {
        drop(Box::from_raw(bench));
    }
}

/// Builds the target density of `cfg`.
///
/// # Safety
/// `cfg` must come from this library; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hybmc_target_new(cfg: *const HybmcConfig, out: *mut *mut HybmcTarget) -> HybmcStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return null(if cfg.is_null() { "cfg" } else { "out" });
        }
        match (*cfg).0.target.build() {
            Ok(t) => {
                *out = Box::into_raw(Box::new(HybmcTarget(t)));
                HybmcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Dimension of the target, 0 for a null handle.
///
/// # Safety
/// `target` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn hybmc_target_dim(target: *const HybmcTarget) -> usize {
    target.as_ref().map_or(0, |t| t.0.dim())
}

/// Unnormalized log-density at `x[0..len]`; `len` must equal the dimension.
///
/// # Safety
/// `target` must come from this library, `x` must point to `len` doubles and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hybmc_target_log_density(
    target: *const HybmcTarget,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> HybmcStatus {
    guard(|| {
        let Some(t) = target.as_ref() else { return null("target") };
        if x.is_null() || out.is_null() {
            return null(if x.is_null() { "x" } else { "out" });
        }
        if len != t.0.dim() {
            return fail(HybmcStatus::OutOfRange, format!("expected {} coordinates, got {len}", t.0.dim()));
        }
        *out = t.0.log_density(std::slice::from_raw_parts(x, len));
        HybmcStatus::Ok
    })
}

/// # Safety
/// `target` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hybmc_target_free(target: *mut HybmcTarget) {
    if !target.is_null() {
        drop(Box::from_raw(target));
    }
}

/// Frees a string returned by [`hybmc_config_to_json`].
///
/// # Safety
/// `s` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hybmc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
