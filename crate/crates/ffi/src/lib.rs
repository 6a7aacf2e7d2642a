//! C ABI over the `ris-semcom` simulator.
//!
//! Every function returns an [`RscStatus`]; on failure a description is kept
//! per thread and can be read with [`rsc_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Passing a null handle to a `*_free` function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ris_semcom::agents::RewardKind;
use ris_semcom::harness::{load_config, oracle_for_spec, run_rows, run_selftest, write_csv, ExperimentSpec, MetricsRow};
use ris_semcom::Error;

/// Result code of every `rsc_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RscStatus {
    Ok = 0,
    NullPointer = 1,
    /// A string argument was not valid UTF-8, or an index was out of bounds.
    InvalidArgument = 2,
    Config = 3,
    ConfigParse = 4,
    Dimension = 5,
    OutOfRange = 6,
    NonFinite = 7,
    ZeroDistance = 8,
    InsufficientCp = 9,
    InsufficientReplay = 10,
    SearchSpaceTooLarge = 11,
    Checkpoint = 12,
    Io = 13,
    /// The self test ran but at least one check failed.
    SelftestFailed = 14,
    BufferTooSmall = 15,
    Panic = 99,
}

impl From<&Error> for RscStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) => RscStatus::Config,
            Error::ConfigParse { .. } => RscStatus::ConfigParse,
            Error::Dimension(_) => RscStatus::Dimension,
            Error::OutOfRange(_) => RscStatus::OutOfRange,
            Error::NonFinite(_) => RscStatus::NonFinite,
            Error::ZeroDistance => RscStatus::ZeroDistance,
            Error::InsufficientCp { .. } => RscStatus::InsufficientCp,
            Error::InsufficientReplay { .. } => RscStatus::InsufficientReplay,
            Error::SearchSpaceTooLarge(_) => RscStatus::SearchSpaceTooLarge,
            Error::Checkpoint(_) => RscStatus::Checkpoint,
            Error::Io(_) => RscStatus::Io,
        }
    }
}

/// Experiment configuration.
pub struct RscSpec(ExperimentSpec);

/// Metrics rows of a finished run, sorted by seed, interval and user.
pub struct RscResults(Vec<MetricsRow>);

/// One metrics row. `reward_kind` is 0 for accuracy, 1 for MSE, 2 for rate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RscRow {
    pub seed: usize,
    pub interval: usize,
    pub user: usize,
    pub reward_kind: u32,
    pub blocked: bool,
    pub acc: f64,
    pub mse: f64,
    pub reward: f64,
    pub sum_rate: f64,
    pub rows_used: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: RscStatus, msg: impl Into<String>) -> RscStatus {
    set_error(msg);
    status
}

fn fail_with(e: &Error) -> RscStatus {
    fail(e.into(), e.to_string())
}

/// Runs `f`, turning panics into [`RscStatus::Panic`] and clearing the last
/// error on success.
fn guard(f: impl FnOnce() -> RscStatus) -> RscStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => {
            if status == RscStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(RscStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, RscStatus> {
    if p.is_null() {
        return Err(fail(RscStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(RscStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($p:expr, $what:expr) => {
        if $p.is_null() {
            return fail(RscStatus::NullPointer, concat!($what, " is null"));
        }
    };
}

/// Description of the last failed call on this thread, or null if the last
/// call succeeded. Valid until the next `rsc_*` call on the same thread.
#[no_mangle]
pub extern "C" fn rsc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rsc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Writes a handle holding the default configuration to `*out`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rsc_spec_default(out: *mut *mut RscSpec) -> RscStatus {
    guard(|| {
        non_null!(out, "out");
        *out = Box::into_raw(Box::new(RscSpec(ExperimentSpec::default())));
        RscStatus::Ok
    })
}

/// Parses and validates a TOML configuration; absent keys keep their
/// defaults. Syntax errors and unknown keys give [`RscStatus::Config`] here
/// and [`RscStatus::ConfigParse`] from [`rsc_spec_load`].
///
/// # Safety
/// `toml` must be null or a NUL-terminated string; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn rsc_spec_from_toml(toml: *const c_char, out: *mut *mut RscSpec) -> RscStatus {
    guard(|| {
        non_null!(out, "out");
        let text = try_status!(str_arg(toml, "toml"));
        match ExperimentSpec::from_toml(text) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(RscSpec(spec)));
                RscStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Loads and validates a TOML configuration file.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn rsc_spec_load(path: *const c_char, out: *mut *mut RscSpec) -> RscStatus {
    guard(|| {
        non_null!(out, "out");
        let path = try_status!(str_arg(path, "path"));
        match load_config(Path::new(path)) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(RscSpec(spec)));
                RscStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Fully resolved configuration as TOML, to be released with
/// [`rsc_string_free`].
///
/// # Safety
/// `spec` must be null or a live handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn rsc_spec_to_toml(spec: *const RscSpec, out: *mut *mut c_char) -> RscStatus {
    guard(|| {
        non_null!(spec, "spec");
        non_null!(out, "out");
        let text = (*spec).0.to_toml().replace('\0', " ");
        *out = CString::new(text).expect("NUL bytes replaced").into_raw();
        RscStatus::Ok
    })
}

/// # Safety
/// `spec` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsc_spec_free(spec: *mut RscSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Runs `n_seeds` independent seeds. When `csv_path` is non-null the metrics
/// CSV is written there as well. On a runtime failure the rows produced so
/// far are still returned through `*out` alongside the error status.
///
/// # Safety
/// `spec` must be a live handle, `csv_path` null or a NUL-terminated string,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsc_run(spec: *const RscSpec, n_seeds: usize, csv_path: *const c_char, out: *mut *mut RscResults) -> RscStatus {
    guard(|| {
        non_null!(spec, "spec");
        non_null!(out, "out");
        if n_seeds == 0 {
            return fail(RscStatus::Config, "n_seeds must be at least 1");
        }
        let spec = &(*spec).0;
        if let Err(e) = spec.validate() {
            return fail_with(&e);
        }
        let path = if csv_path.is_null() { None } else { Some(try_status!(str_arg(csv_path, "csv_path"))) };
        let (rows, mut err) = run_rows(spec, n_seeds);
        if let Some(path) = path {
            let written = std::fs::File::create(path).and_then(|f| {
                let mut w = std::io::BufWriter::new(f);
                write_csv(&mut w, &rows, err.as_ref())?;
                w.flush()
            });
            if let Err(e) = written {
                err = err.or(Some(e.into()));
            }
        }
        *out = Box::into_raw(Box::new(RscResults(rows)));
        match err {
            Some(e) => fail_with(&e),
            None => RscStatus::Ok,
        }
    })
}

/// Number of rows in `results`, 0 for a null handle.
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsc_results_len(results: *const RscResults) -> usize {
    if results.is_null() {
        0
    } else {
        (*results).0.len()
    }
}

/// Copies row `index` into `*out`.
///
/// # Safety
/// `results` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsc_results_get(results: *const RscResults, index: usize, out: *mut RscRow) -> RscStatus {
    guard(|| {
        non_null!(results, "results");
        non_null!(out, "out");
        let rows = &(*results).0;
        let Some(r) = rows.get(index) else {
            return fail(RscStatus::InvalidArgument, format!("row {index} out of {}", rows.len()));
        };
        let m = &r.metrics;
        *out = RscRow {
            seed: r.seed,
            interval: m.interval,
            user: m.user,
            reward_kind: match m.reward_kind {
                RewardKind::Acc => 0,
                RewardKind::Mse => 1,
                RewardKind::Rate => 2,
            },
            blocked: m.blocked,
            acc: m.acc,
            mse: m.mse,
            reward: m.reward,
            sum_rate: m.sum_rate,
            rows_used: m.rows_used,
        };
        RscStatus::Ok
    })
}

/// # Safety
/// `results` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsc_results_free(results: *mut RscResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Exhaustive sum-rate search over the first `rows` RIS rows of the seed-0
/// world. Writes `rows` phase indices to `indices` (capacity `capacity`) and
/// the best sum rate to `*sum_rate`.
///
/// # Safety
/// `spec` must be a live handle, `indices` valid for `capacity` writes and
/// `sum_rate` writable.
#[no_mangle]
pub unsafe extern "C" fn rsc_oracle(spec: *const RscSpec, rows: usize, indices: *mut u8, capacity: usize, sum_rate: *mut f64) -> RscStatus {
    guard(|| {
        non_null!(spec, "spec");
        non_null!(sum_rate, "sum_rate");
        if capacity < rows {
            return fail(RscStatus::BufferTooSmall, format!("{rows} indices need a buffer of {rows}, got {capacity}"));
        }
        if rows > 0 {
            non_null!(indices, "indices");
        }
        match oracle_for_spec(&(*spec).0, rows) {
            Ok(res) => {
                if rows > 0 {
                    std::slice::from_raw_parts_mut(indices, rows).copy_from_slice(&res.indices);
                }
                *sum_rate = res.value;
                RscStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Built-in checks plus a small deterministic experiment. `*passed` receives
/// the verdict; the experiment's CSV goes to `csv_path` when non-null.
/// Returns [`RscStatus::SelftestFailed`] if any check failed.
///
/// # Safety
/// `csv_path` must be null or a NUL-terminated string; `passed` null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rsc_selftest(seed: u64, csv_path: *const c_char, passed: *mut bool) -> RscStatus {
    guard(|| {
        let report = run_selftest(seed);
        if !passed.is_null() {
            *passed = report.passed();
        }
        if !csv_path.is_null() {
            let path = try_status!(str_arg(csv_path, "csv_path"));
            let written = std::fs::File::create(path).and_then(|f| {
                let mut w = std::io::BufWriter::new(f);
                write_csv(&mut w, &report.rows, None)?;
                w.flush()
            });
            if let Err(e) = written {
                return fail_with(&e.into());
            }
        }
        if report.passed() {
            RscStatus::Ok
        } else {
            let failed: Vec<&str> = report.checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect();
            fail(RscStatus::SelftestFailed, format!("failed checks: {}", failed.join(", ")))
        }
    })
}
