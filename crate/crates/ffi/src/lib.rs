//! C ABI over the agentsearch orchestrator.
//!
//! Handles are opaque heap pointers released with their `_free` function.
//! Every fallible call returns an [`AsStatus`]; the message of the most
//! recent failure on the calling thread is available from
//! [`as_last_error`]. Strings handed out by the library are owned by the
//! caller and released with [`as_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use agentsearch::config::SearchConfig;
use agentsearch::metrics::{self, GiniVariant, LabeledPredictions};
use agentsearch::orchestrator::{Ablation, Orchestrator, Phase};
use agentsearch::reporting::{self, TreeFormat};
use agentsearch::Error;

/// Result codes. The nonzero values from 1 to 4 match the command-line
/// exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsStatus {
    Ok = 0,
    Config = 1,
    Backend = 2,
    Budget = 3,
    Persistence = 4,
    InvalidArgument = 5,
    UndefinedMetric = 6,
    Panic = 7,
    Interrupted = 130,
}

/// Phase of a run as reported by [`as_run_phase`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsPhase {
    Mcts = 0,
    Ea = 1,
    Done = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsTreeFormat {
    Dot = 0,
    Json = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AsMetrics {
    pub er: f64,
    pub norm_gini: f64,
    pub spearman: f64,
    pub rmse: f64,
}

/// Opaque run handle.
pub struct AsRun {
    inner: Orchestrator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> AsStatus {
    match e {
        Error::UndefinedMetric(_) => AsStatus::UndefinedMetric,
        Error::Interrupted => AsStatus::Interrupted,
        other => match other.exit_code() {
            1 => AsStatus::Config,
            2 => AsStatus::Backend,
            3 => AsStatus::Budget,
            _ => AsStatus::Persistence,
        },
    }
}

struct Fail(AsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(AsStatus::InvalidArgument, msg.to_string())
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            AsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

unsafe fn run_ref<'a>(run: *mut AsRun) -> Result<&'a mut AsRun, Fail> {
    run.as_mut().ok_or_else(|| invalid("run handle is null"))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    let c = CString::new(s).map_err(|_| invalid("output contains NUL"))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn as_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn as_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn as_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Starts a run. `config_json` may be NULL for defaults; `ablation` is one
/// of "none", "no-mcts", "no-ea", "random-root", or NULL for "none".
///
/// # Safety
/// String arguments must be NUL-terminated or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn as_run_new(
    config_json: *const c_char,
    ablation: *const c_char,
    out: *mut *mut AsRun,
) -> AsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let cfg = if config_json.is_null() {
            SearchConfig::default()
        } else {
            SearchConfig::from_json_str(str_arg(config_json, "config")?)?
        };
        let ab = if ablation.is_null() {
            Ablation::None
        } else {
            let s = str_arg(ablation, "ablation")?;
            Ablation::parse(s).ok_or_else(|| invalid(&format!("unknown ablation {s:?}")))?
        };
        let run = Box::new(AsRun {
            inner: Orchestrator::new(cfg, ab)?,
        });
        *out = Box::into_raw(run);
        Ok(())
    })
}

/// Opens a saved run for resuming or reporting.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn as_run_load(path: *const c_char, out: *mut *mut AsRun) -> AsStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let ledger = reporting::load_state(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(AsRun {
            inner: Orchestrator::resume(ledger)?,
        }));
        Ok(())
    })
}

/// # Safety
/// `run` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn as_run_free(run: *mut AsRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `run` must be a live handle and `phase` writable.
#[no_mangle]
pub unsafe extern "C" fn as_run_phase(run: *mut AsRun, phase: *mut AsPhase) -> AsStatus {
    guard(|| {
        let r = run_ref(run)?;
        if phase.is_null() {
            return Err(invalid("output pointer is null"));
        }
        *phase = match r.inner.phase() {
            Phase::Mcts => AsPhase::Mcts,
            Phase::Ea => AsPhase::Ea,
            Phase::Done => AsPhase::Done,
        };
        Ok(())
    })
}

/// One search iteration.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn as_run_step(run: *mut AsRun) -> AsStatus {
    guard(|| {
        run_ref(run)?.inner.step()?;
        Ok(())
    })
}

/// Steps until the run is done.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn as_run_until_done(run: *mut AsRun) -> AsStatus {
    guard(|| {
        run_ref(run)?.inner.run()?;
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn as_run_save(run: *mut AsRun, path: *const c_char) -> AsStatus {
    guard(|| {
        let r = run_ref(run)?;
        reporting::save_state(&r.inner.ledger, &PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Final program as JSON (id, label, reward, metrics, source).
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn as_run_best_json(run: *mut AsRun, out: *mut *mut c_char) -> AsStatus {
    guard(|| {
        let r = run_ref(run)?;
        let best = r
            .inner
            .ledger
            .best()
            .ok_or_else(|| Fail(AsStatus::Config, "run is not done".into()))?;
        let doc = serde_json::json!({
            "id": best.id(),
            "label": best.program.label,
            "reward": best.reward,
            "metrics": best.metrics,
            "source": best.program.source_text,
        });
        put_string(out, doc.to_string())
    })
}

/// Leaderboard as CSV with a header row.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn as_run_leaderboard_csv(run: *mut AsRun, top_n: usize, out: *mut *mut c_char) -> AsStatus {
    guard(|| {
        let r = run_ref(run)?;
        let rows = reporting::leaderboard(&r.inner.ledger, top_n)?;
        put_string(out, reporting::leaderboard_csv(&rows)?)
    })
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn as_run_export_tree(run: *mut AsRun, format: AsTreeFormat, out: *mut *mut c_char) -> AsStatus {
    guard(|| {
        let r = run_ref(run)?;
        let tree = r
            .inner
            .ledger
            .tree()
            .ok_or_else(|| Fail(AsStatus::Config, "run holds no search tree".into()))?;
        let f = match format {
            AsTreeFormat::Dot => TreeFormat::Dot,
            AsTreeFormat::Json => TreeFormat::Json,
        };
        put_string(out, reporting::export_tree(tree, f))
    })
}

/// Evaluates predictions against labels. `rank_sum_gini` selects the
/// rank-sum Gini variant.
///
/// # Safety
/// `y_hat` and `y` must each point to `n` readable doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn as_metrics_compute(
    y_hat: *const f64,
    y: *const f64,
    n: usize,
    rank_sum_gini: bool,
    out: *mut AsMetrics,
) -> AsStatus {
    guard(|| {
        if y_hat.is_null() || y.is_null() || out.is_null() {
            return Err(invalid("null pointer argument"));
        }
        let lp = LabeledPredictions::new(
            std::slice::from_raw_parts(y_hat, n).to_vec(),
            std::slice::from_raw_parts(y, n).to_vec(),
        )?;
        let variant = if rank_sum_gini {
            GiniVariant::RankSum
        } else {
            GiniVariant::Standard
        };
        let mv = metrics::evaluate(&lp, variant)?;
        *out = AsMetrics {
            er: mv.er,
            norm_gini: mv.norm_gini,
            spearman: mv.spearman,
            rmse: mv.rmse,
        };
        Ok(())
    })
}
