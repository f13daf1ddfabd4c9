//! C ABI for the voinet simulator.
//!
//! Objects are opaque heap handles created by `*_new`/`*_from_*`/`voinet_run_*`
//! calls and released by the matching `*_free`. Every fallible call returns a
//! [`VoinetStatus`]; on failure a message is available from
//! [`voinet_last_error_message`] on the same thread. Strings returned through
//! out-parameters are owned by the caller and released with [`voinet_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use voinet::harness::{export_trace, monte_carlo, pendulum_scenario, InputMode, ScenarioConfig, SimulationTrace, Simulator, SummaryMetrics};
use voinet::scheduling::{dvoi_with_weight, parse_policies};
use voinet::Error;

/// Result codes. Nonzero values mirror the error categories of the library.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoinetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Model = 4,
    Dimension = 5,
    Numeric = 6,
    Trace = 7,
    Calibration = 8,
    Io = 9,
    Format = 10,
    OutOfRange = 11,
    Panic = 12,
}

impl From<&Error> for VoinetStatus {
    fn from(err: &Error) -> Self {
        match err.category() {
            "config" => VoinetStatus::Config,
            "model" => VoinetStatus::Model,
            "dimension" => VoinetStatus::Dimension,
            "numeric" => VoinetStatus::Numeric,
            "trace" => VoinetStatus::Trace,
            "calibration" => VoinetStatus::Calibration,
            "io" => VoinetStatus::Io,
            _ => VoinetStatus::Format,
        }
    }
}

/// Scenario configuration handle.
pub struct VoinetScenario {
    config: ScenarioConfig,
}

/// Single-episode trace handle.
pub struct VoinetTrace {
    trace: SimulationTrace,
}

/// Monte Carlo summary handle.
pub struct VoinetSummary {
    summary: SummaryMetrics,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = text);
}

struct Failure(VoinetStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure(VoinetStatus::from(&err), err.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> VoinetStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_last_error("");
            VoinetStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(&message);
            status
        }
        Err(_) => {
            set_last_error("panic inside voinet");
            VoinetStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(VoinetStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(VoinetStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, value: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output string"));
    }
    let c = CString::new(value).map_err(|_| Failure(VoinetStatus::Format, "string contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn write_value<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output value"));
    }
    *out = value;
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next voinet call on the same thread.
#[no_mangle]
pub extern "C" fn voinet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn voinet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from a voinet call returning an owned string, or be null.
#[no_mangle]
pub unsafe extern "C" fn voinet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Built-in two-hop inverted pendulum scenario.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_scenario_pendulum(out: *mut *mut VoinetScenario) -> VoinetStatus {
    guard(|| write_out(out, VoinetScenario { config: pendulum_scenario() }))
}

/// Parse and validate a scenario document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_scenario_from_json(json: *const c_char, out: *mut *mut VoinetScenario) -> VoinetStatus {
    guard(|| {
        let config = ScenarioConfig::from_json(text(json, "json")?)?;
        write_out(out, VoinetScenario { config })
    })
}

/// # Safety
/// `scenario` must be a live handle; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_scenario_to_json(scenario: *const VoinetScenario, out: *mut *mut c_char) -> VoinetStatus {
    guard(|| write_string(out, deref(scenario, "scenario")?.config.to_json()))
}

/// Replace the per-hop policies, e.g. `"dvoi"` or `"dvoi,periodic:1"`.
///
/// # Safety
/// `scenario` must be a live handle; `spec` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn voinet_scenario_set_policy(scenario: *mut VoinetScenario, spec: *const c_char) -> VoinetStatus {
    guard(|| {
        let s = deref_mut(scenario, "scenario")?;
        let mut config = s.config.clone();
        config.policies = parse_policies(text(spec, "policy")?, config.topology.max_hops())?;
        config.validate()?;
        s.config = config;
        Ok(())
    })
}

/// `"oracle"` or `"estimated"`.
///
/// # Safety
/// `scenario` must be a live handle; `mode` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn voinet_scenario_set_input_mode(scenario: *mut VoinetScenario, mode: *const c_char) -> VoinetStatus {
    guard(|| {
        let s = deref_mut(scenario, "scenario")?;
        s.config.input_mode = text(mode, "input mode")?.parse::<InputMode>()?;
        Ok(())
    })
}

/// Set the multiplier of a 1-based hop.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn voinet_scenario_set_lambda(scenario: *mut VoinetScenario, hop: usize, lambda: f64) -> VoinetStatus {
    guard(|| {
        let s = deref_mut(scenario, "scenario")?;
        let hops = s.config.topology.lambda.len();
        if hop == 0 || hop > hops {
            return Err(Failure(VoinetStatus::OutOfRange, format!("hop {hop} outside 1..={hops}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Failure(VoinetStatus::Config, format!("multiplier must be finite and nonnegative, got {lambda}")));
        }
        s.config.topology.lambda[hop - 1] = lambda;
        Ok(())
    })
}

/// # Safety
/// `scenario` must be a live handle or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn voinet_scenario_free(scenario: *mut VoinetScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulate one episode.
///
/// # Safety
/// `scenario` must be a live handle; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_run_episode(scenario: *const VoinetScenario, seed: u64, out: *mut *mut VoinetTrace) -> VoinetStatus {
    guard(|| {
        let sim = Simulator::new(&deref(scenario, "scenario")?.config)?;
        write_out(out, VoinetTrace { trace: sim.episode(seed)? })
    })
}

/// Number of recorded steps of a loop.
///
/// # Safety
/// `trace` must be a live handle; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_trace_steps(trace: *const VoinetTrace, loop_index: usize, out: *mut usize) -> VoinetStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.trace;
        let lt = t
            .loops
            .get(loop_index)
            .ok_or_else(|| Failure(VoinetStatus::OutOfRange, format!("loop {loop_index} out of range")))?;
        write_value(out, lt.steps.len())
    })
}

/// Realized quadratic cost summed over loops.
///
/// # Safety
/// `trace` must be a live handle; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_trace_cost(trace: *const VoinetTrace, out: *mut f64) -> VoinetStatus {
    guard(|| write_value(out, deref(trace, "trace")?.trace.cost()))
}

/// Transmissions of a loop at a 1-based hop.
///
/// # Safety
/// `trace` must be a live handle; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_trace_trigger_count(trace: *const VoinetTrace, loop_index: usize, hop: usize, out: *mut u64) -> VoinetStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.trace;
        let count = t
            .loops
            .get(loop_index)
            .and_then(|lt| hop.checked_sub(1).and_then(|j| lt.trigger_counts().get(j).copied()))
            .ok_or_else(|| Failure(VoinetStatus::OutOfRange, format!("loop {loop_index}, hop {hop} out of range")))?;
        write_value(out, count)
    })
}

/// Write the trace as CSV.
///
/// # Safety
/// `trace` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn voinet_trace_write_csv(trace: *const VoinetTrace, path: *const c_char) -> VoinetStatus {
    guard(|| Ok(export_trace(&deref(trace, "trace")?.trace, Path::new(text(path, "path")?))?))
}

/// # Safety
/// `trace` must be a live handle or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn voinet_trace_free(trace: *mut VoinetTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Monte Carlo over seeds `seed..seed + runs` (`runs >= 2`).
///
/// # Safety
/// `scenario` must be a live handle; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_monte_carlo(scenario: *const VoinetScenario, runs: usize, seed: u64, out: *mut *mut VoinetSummary) -> VoinetStatus {
    guard(|| {
        let summary = monte_carlo(&deref(scenario, "scenario")?.config, runs, seed)?;
        write_out(out, VoinetSummary { summary })
    })
}

/// # Safety
/// `summary` must be a live handle; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_summary_mean_cost(summary: *const VoinetSummary, out: *mut f64) -> VoinetStatus {
    guard(|| write_value(out, deref(summary, "summary")?.summary.mean_cost))
}

/// # Safety
/// `summary` must be a live handle; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_summary_augmented_cost(summary: *const VoinetSummary, out: *mut f64) -> VoinetStatus {
    guard(|| write_value(out, deref(summary, "summary")?.summary.augmented_cost))
}

/// Total request rate at a 1-based hop.
///
/// # Safety
/// `summary` must be a live handle; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_summary_rate(summary: *const VoinetSummary, hop: usize, out: *mut f64) -> VoinetStatus {
    guard(|| {
        let s = &deref(summary, "summary")?.summary;
        let rate = hop
            .checked_sub(1)
            .and_then(|j| s.rates.per_hop.get(j).copied())
            .ok_or_else(|| Failure(VoinetStatus::OutOfRange, format!("hop {hop} out of range")))?;
        write_value(out, rate)
    })
}

/// # Safety
/// `summary` must be a live handle; `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn voinet_summary_to_json(summary: *const VoinetSummary, out: *mut *mut c_char) -> VoinetStatus {
    guard(|| {
        let s = &deref(summary, "summary")?.summary;
        let json = serde_json::to_string_pretty(s).map_err(|e| Failure(VoinetStatus::Format, e.to_string()))?;
        write_string(out, json)
    })
}

/// # Safety
/// `summary` must be a live handle or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn voinet_summary_free(summary: *mut VoinetSummary) {
    if !summary.is_null() {
        drop(Box::from_raw(summary));
    }
}

/// `lambda - x^T (A^h)^T G A^h x` on raw row-major arrays: `xtilde` has `n`
/// entries, `a` and `weight` have `n * n`.
///
/// # Safety
/// The array pointers must reference the stated number of readable doubles.
#[no_mangle]
pub unsafe extern "C" fn voinet_dvoi_value(
    xtilde: *const f64,
    a: *const f64,
    weight: *const f64,
    n: usize,
    lookahead: usize,
    lambda: f64,
    out: *mut f64,
) -> VoinetStatus {
    guard(|| {
        if xtilde.is_null() || a.is_null() || weight.is_null() {
            return Err(null("array"));
        }
        if n == 0 {
            return Err(Failure(VoinetStatus::Dimension, "state dimension must be positive".into()));
        }
        let x = DVector::from_column_slice(std::slice::from_raw_parts(xtilde, n));
        let a = DMatrix::from_row_slice(n, n, std::slice::from_raw_parts(a, n * n));
        let g = DMatrix::from_row_slice(n, n, std::slice::from_raw_parts(weight, n * n));
        write_value(out, dvoi_with_weight(&x, &a, &g, lookahead, lambda))
    })
}
