//! C ABI over the `mtrbench` evaluator and optimizers.
//!
//! Every function returns an [`MtrbStatus`]. On failure a description is
//! stored per thread and can be read with [`mtrb_last_error_message`].
//! Objects are opaque handles created by `*_new`/`mtrb_optimize` and released
//! with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mtrbench::cli::{optimize, RunConfig};
use mtrbench::model::ParamPoint;
use mtrbench::objective::{fitness, Evaluation, Evaluator, FitnessOracle, ObjectiveConfig};
use mtrbench::optimizers::{Algorithm, HistoryEntry, OptRun};
use mtrbench::xslib::XsCache;
use mtrbench::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtrbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    OutOfBounds = 5,
    Evaluation = 6,
    Panic = 7,
}

/// One objective evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MtrbEvaluation {
    pub u_density: f64,
    pub w_density: f64,
    pub k: f64,
    pub k_std: f64,
    pub fast_flux: f64,
    pub fast_flux_std: f64,
    pub fitness: f64,
    pub eval_index: u64,
    pub wall_time_ms: f64,
}

/// One entry of an optimizer history.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MtrbHistoryEntry {
    pub eval: MtrbEvaluation,
    pub generation: u64,
}

/// Objective bound to a cross-section library, geometry and transport settings.
pub struct MtrbEvaluator {
    inner: Evaluator,
}

/// Finished optimizer run.
pub struct MtrbOptRun {
    inner: OptRun,
    failure: Option<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> MtrbStatus {
    match err {
        Error::Io { .. } => MtrbStatus::Io,
        Error::Json { .. } | Error::MalformedRecord { .. } | Error::Inconsistent { .. } => MtrbStatus::Parse,
        Error::OutOfBounds { .. } => MtrbStatus::OutOfBounds,
        Error::DegenerateMedium(_) | Error::NonFinite(_) | Error::Evaluation(_) => MtrbStatus::Evaluation,
        Error::NegativeDensity(_) | Error::MissingMaterial(_) | Error::InvalidConfig(_) => {
            MtrbStatus::InvalidArgument
        }
    }
}

struct Failure(MtrbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MtrbStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording its error message and turning panics into
/// [`MtrbStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MtrbStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MtrbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MtrbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MtrbStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Parses inline config JSON; NULL gives the defaults. Relative paths
/// resolve against the working directory.
unsafe fn config_arg(json: *const c_char) -> Result<RunConfig, Failure> {
    let text = if json.is_null() { "{}" } else { str_arg(json, "config_json")? };
    Ok(RunConfig::parse(text, Path::new("<config_json>"), Path::new("."))?)
}

fn to_c(e: &Evaluation) -> MtrbEvaluation {
    MtrbEvaluation {
        u_density: e.params.u_density,
        w_density: e.params.w_density,
        k: e.k,
        k_std: e.k_std,
        fast_flux: e.fast_flux,
        fast_flux_std: e.fast_flux_std,
        fitness: e.fitness,
        eval_index: e.eval_index,
        wall_time_ms: e.wall_time_ms,
    }
}

fn entry_to_c(h: &HistoryEntry) -> MtrbHistoryEntry {
    MtrbHistoryEntry {
        eval: to_c(&h.eval),
        generation: h.gen as u64,
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer stays
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn mtrb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mtrb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Benchmark fitness for a given k and fast flux with the default objective
/// constants. Lower is better.
#[no_mangle]
pub extern "C" fn mtrb_fitness(k: f64, fast_flux: f64) -> f64 {
    fitness(k, fast_flux, &ObjectiveConfig::default())
}

/// Creates an evaluator from run-config JSON (NULL for defaults).
///
/// # Safety
/// `config_json` is NULL or a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtrb_evaluator_new(config_json: *const c_char, out: *mut *mut MtrbEvaluator) -> MtrbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let cfg = config_arg(config_json)?;
        let inner = cfg.evaluator(&XsCache::new())?;
        *out = Box::into_raw(Box::new(MtrbEvaluator { inner }));
        Ok(())
    })
}

/// Releases an evaluator. NULL is ignored.
///
/// # Safety
/// `ev` is NULL or a handle from [`mtrb_evaluator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtrb_evaluator_free(ev: *mut MtrbEvaluator) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

/// Evaluates one (U, W) point.
///
/// # Safety
/// `ev` is a live evaluator handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtrb_evaluate(
    ev: *const MtrbEvaluator,
    u_density: f64,
    w_density: f64,
    out: *mut MtrbEvaluation,
) -> MtrbStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("evaluator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = ev.inner.evaluate_one(ParamPoint::new(u_density, w_density))?;
        *out = to_c(&e);
        Ok(())
    })
}

/// Evaluates `n` points in parallel. Results are in input order; on failure
/// the status describes the first failed point and `out` is left partially
/// written.
///
/// # Safety
/// `u` and `w` point to `n` doubles each and `out` to `n` writable records.
#[no_mangle]
pub unsafe extern "C" fn mtrb_evaluate_batch(
    ev: *const MtrbEvaluator,
    u: *const f64,
    w: *const f64,
    n: usize,
    out: *mut MtrbEvaluation,
) -> MtrbStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("evaluator"))?;
        if n == 0 {
            return Ok(());
        }
        if u.is_null() || w.is_null() || out.is_null() {
            return Err(null("u, w or out"));
        }
        let (u, w) = (std::slice::from_raw_parts(u, n), std::slice::from_raw_parts(w, n));
        let out = std::slice::from_raw_parts_mut(out, n);
        let points: Vec<ParamPoint> = u.iter().zip(w).map(|(&u, &w)| ParamPoint::new(u, w)).collect();
        for (i, r) in ev.inner.evaluate_batch(&points).into_iter().enumerate() {
            match r {
                Ok(e) => out[i] = to_c(&e),
                Err(e) => {
                    let f = Failure::from(e);
                    return Err(Failure(f.0, format!("point {i}: {}", f.1)));
                }
            }
        }
        Ok(())
    })
}

/// Number of evaluation indices the evaluator has handed out.
///
/// # Safety
/// `ev` is a live evaluator handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtrb_evaluator_count(ev: *const MtrbEvaluator, out: *mut u64) -> MtrbStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("evaluator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ev.inner.evaluations();
        Ok(())
    })
}

/// Runs an optimizer with a fresh evaluator. `algorithm` is `"jaya"` or
/// `"ppo-es"`; `seed` replaces the transport and optimizer seeds. A run that
/// stops early still succeeds; see [`mtrb_run_failure`].
///
/// # Safety
/// `config_json` is NULL or a NUL-terminated string, `algorithm` is a
/// NUL-terminated string and `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtrb_optimize(
    config_json: *const c_char,
    algorithm: *const c_char,
    seed: u64,
    out: *mut *mut MtrbOptRun,
) -> MtrbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let algo: Algorithm = str_arg(algorithm, "algorithm")?.parse()?;
        let mut cfg = config_arg(config_json)?.with_seed(seed);
        cfg.algorithm = algo;
        let ev = cfg.evaluator(&XsCache::new())?;
        let inner = optimize(&cfg, &ev)?;
        let failure = inner.failure.as_deref().map(|f| CString::new(f.replace('\0', " ")).unwrap());
        *out = Box::into_raw(Box::new(MtrbOptRun { inner, failure }));
        Ok(())
    })
}

/// Releases a run. NULL is ignored.
///
/// # Safety
/// `run` is NULL or a handle from [`mtrb_optimize`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mtrb_run_free(run: *mut MtrbOptRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of history entries.
///
/// # Safety
/// `run` is a live run handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtrb_run_len(run: *const MtrbOptRun, out: *mut usize) -> MtrbStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = run.inner.history.len();
        Ok(())
    })
}

/// History entry `index`, in evaluation order.
///
/// # Safety
/// `run` is a live run handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtrb_run_get(run: *const MtrbOptRun, index: usize, out: *mut MtrbHistoryEntry) -> MtrbStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let h = run.inner.history.get(index).ok_or_else(|| {
            Failure(
                MtrbStatus::OutOfBounds,
                format!("index {index} out of range for history of {}", run.inner.history.len()),
            )
        })?;
        *out = entry_to_c(h);
        Ok(())
    })
}

/// Best entry of the run; `MTRB_STATUS_EVALUATION` when no evaluation succeeded.
///
/// # Safety
/// `run` is a live run handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtrb_run_best(run: *const MtrbOptRun, out: *mut MtrbHistoryEntry) -> MtrbStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let best = run
            .inner
            .best
            .as_ref()
            .ok_or_else(|| Failure(MtrbStatus::Evaluation, "run has no successful evaluation".into()))?;
        *out = entry_to_c(best);
        Ok(())
    })
}

/// Why the run stopped early, or NULL if it used its whole budget. Valid
/// until the run is freed.
///
/// # Safety
/// `run` is NULL or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn mtrb_run_failure(run: *const MtrbOptRun) -> *const c_char {
    run.as_ref()
        .and_then(|r| r.failure.as_ref())
        .map_or(ptr::null(), |s| s.as_ptr())
}
