//! C ABI for the equilibrium solver.
//!
//! The generated header lives at `include/radner.h` (rebuilt by `build.rs`
//! on every compile). Link against the `staticlib` or `cdylib` artifact of
//! this crate.
//!
//! # Symbol prefix
//!
//! Every exported symbol starts with `radner_`; exported types start with
//! `Radner`.
//!
//! # Handles and ownership
//!
//! [`RadnerSolution`] is an opaque handle created by [`radner_solve_json`]
//! and released with [`radner_solution_free`]. Strings returned through
//! `char **` out-parameters are owned by the caller and must be released
//! with [`radner_string_free`]. Out-parameters are written only on success.
//!
//! # Error reporting
//!
//! Every fallible function returns a [`RadnerStatus`]. On failure,
//! [`radner_last_error_message`] returns a NUL-terminated description of
//! the most recent failure on the calling thread; the pointer stays valid
//! until the next failing call on that thread.
//!
//! # Thread safety
//!
//! A solution handle is immutable after creation and may be read from any
//! number of threads concurrently. Creating and freeing handles are not
//! synchronized: do not free a handle while another thread is using it.
//!
//! # Indexing conventions
//!
//! Agents are addressed by their zero-based position in the scenario's
//! `agents` array. Ranks — positions in the stop-trade ordering — are
//! one-based, matching the solver's own numbering (rank 1 stops first).

use radner_core::{parse_scenario, EquilibriumSolution, Error};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Result of every C API call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RadnerStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// The input was rejected: malformed JSON, a schema violation, or an
    /// out-of-range configuration value.
    InvalidInput = 2,
    /// The solver or verifier failed on structurally valid input.
    SolveFailed = 3,
    /// An index or time argument lies outside its valid range.
    OutOfRange = 4,
    /// The library panicked internally; this is a bug worth reporting.
    Panic = 5,
}

/// Opaque handle to a solved equilibrium.
pub struct RadnerSolution {
    inner: EquilibriumSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn failure(status: RadnerStatus, message: &str) -> RadnerStatus {
    set_last_error(message);
    status
}

fn failure_from(error: &Error) -> RadnerStatus {
    let status = match error {
        Error::Scenario { .. } | Error::Json(_) | Error::Spec(_) => RadnerStatus::InvalidInput,
        Error::Domain(_) => RadnerStatus::OutOfRange,
        _ => RadnerStatus::SolveFailed,
    };
    failure(status, &error.to_string())
}

/// Runs `body`, converting a panic into [`RadnerStatus::Panic`] instead of
/// unwinding across the FFI boundary.
fn guarded(body: impl FnOnce() -> RadnerStatus) -> RadnerStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".to_string());
            failure(RadnerStatus::Panic, &message)
        }
    }
}

unsafe fn solution_ref<'a>(handle: *const RadnerSolution) -> Option<&'a EquilibriumSolution> {
    handle.as_ref().map(|h| &h.inner)
}

/// ABI revision of this header; bumped on any breaking change.
#[no_mangle]
pub extern "C" fn radner_abi_version() -> u32 {
    1
}

/// Description of the most recent failure on the calling thread.
///
/// The returned pointer is owned by the library and stays valid until the
/// next failing call on the same thread. Never free it.
#[no_mangle]
pub extern "C" fn radner_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Parses scenario JSON (the same schema the `radner` CLI accepts) and
/// solves the market.
///
/// On success writes a freshly allocated handle to `out_solution`; release
/// it with [`radner_solution_free`].
///
/// # Safety
///
/// `scenario_json` must point to a NUL-terminated string; `out_solution`
/// must point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn radner_solve_json(
    scenario_json: *const c_char,
    out_solution: *mut *mut RadnerSolution,
) -> RadnerStatus {
    guarded(|| {
        if scenario_json.is_null() || out_solution.is_null() {
            return failure(
                RadnerStatus::NullArgument,
                "scenario_json and out_solution must be non-null",
            );
        }
        let text = match CStr::from_ptr(scenario_json).to_str() {
            Ok(text) => text,
            Err(_) => {
                return failure(RadnerStatus::InvalidInput, "scenario_json is not valid UTF-8")
            }
        };
        let scenario = match parse_scenario(text) {
            Ok(scenario) => scenario,
            Err(e) => return failure_from(&e),
        };
        match EquilibriumSolution::solve(scenario.spec, &scenario.model) {
            Ok(inner) => {
                *out_solution = Box::into_raw(Box::new(RadnerSolution { inner }));
                RadnerStatus::Ok
            }
            Err(e) => failure_from(&e),
        }
    })
}

/// Releases a handle returned by [`radner_solve_json`]. Null is a no-op.
///
/// # Safety
///
/// `solution` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn radner_solution_free(solution: *mut RadnerSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Number of agents in the solved market.
///
/// # Safety
///
/// `solution` must be a live handle; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn radner_agent_count(
    solution: *const RadnerSolution,
    out_count: *mut u32,
) -> RadnerStatus {
    guarded(|| {
        let (Some(solution), false) = (solution_ref(solution), out_count.is_null()) else {
            return failure(RadnerStatus::NullArgument, "solution and out_count must be non-null");
        };
        *out_count = solution.agent_count() as u32;
        RadnerStatus::Ok
    })
}

/// The equilibrium initial price S₀.
///
/// # Safety
///
/// `solution` must be a live handle; `out_price` must be writable.
#[no_mangle]
pub unsafe extern "C" fn radner_initial_price(
    solution: *const RadnerSolution,
    out_price: *mut f64,
) -> RadnerStatus {
    guarded(|| {
        let (Some(solution), false) = (solution_ref(solution), out_price.is_null()) else {
            return failure(RadnerStatus::NullArgument, "solution and out_price must be non-null");
        };
        *out_price = solution.initial_price();
        RadnerStatus::Ok
    })
}

/// The one-based rank (position in the stop-trade ordering) of the
/// zero-based `agent`.
///
/// # Safety
///
/// `solution` must be a live handle; `out_rank` must be writable.
#[no_mangle]
pub unsafe extern "C" fn radner_rank_of_agent(
    solution: *const RadnerSolution,
    agent: u32,
    out_rank: *mut u32,
) -> RadnerStatus {
    guarded(|| {
        let (Some(solution), false) = (solution_ref(solution), out_rank.is_null()) else {
            return failure(RadnerStatus::NullArgument, "solution and out_rank must be non-null");
        };
        match solution.ordering().rank_of_agent(agent as usize) {
            Some(rank) => {
                *out_rank = rank as u32;
                RadnerStatus::Ok
            }
            None => failure(
                RadnerStatus::OutOfRange,
                &format!(
                    "agent index {agent} out of range for {} agents",
                    solution.agent_count()
                ),
            ),
        }
    })
}

fn checked_rank(solution: &EquilibriumSolution, rank: u32) -> Result<usize, RadnerStatus> {
    let count = solution.agent_count() as u32;
    if (1..=count).contains(&rank) {
        Ok(rank as usize)
    } else {
        Err(failure(
            RadnerStatus::OutOfRange,
            &format!("rank {rank} out of range 1..={count}"),
        ))
    }
}

/// Stop-trade time τ⁽ʲ⁾ of the one-based rank `rank`.
///
/// # Safety
///
/// `solution` must be a live handle; `out_tau` must be writable.
#[no_mangle]
pub unsafe extern "C" fn radner_stop_time(
    solution: *const RadnerSolution,
    rank: u32,
    out_tau: *mut f64,
) -> RadnerStatus {
    guarded(|| {
        let (Some(solution), false) = (solution_ref(solution), out_tau.is_null()) else {
            return failure(RadnerStatus::NullArgument, "solution and out_tau must be non-null");
        };
        match checked_rank(solution, rank) {
            Ok(rank) => {
                *out_tau = solution.ordering().tau[rank - 1];
                RadnerStatus::Ok
            }
            Err(status) => status,
        }
    })
}

/// Equilibrium price drift μ(t).
///
/// # Safety
///
/// `solution` must be a live handle; `out_drift` must be writable.
#[no_mangle]
pub unsafe extern "C" fn radner_drift(
    solution: *const RadnerSolution,
    t: f64,
    out_drift: *mut f64,
) -> RadnerStatus {
    guarded(|| {
        let (Some(solution), false) = (solution_ref(solution), out_drift.is_null()) else {
            return failure(RadnerStatus::NullArgument, "solution and out_drift must be non-null");
        };
        match solution.drift(t) {
            Ok(value) => {
                *out_drift = value;
                RadnerStatus::Ok
            }
            Err(e) => failure_from(&e),
        }
    })
}

/// Holdings θ⁽ʲ⁾(t) of the one-based rank `rank` at time `t`.
///
/// # Safety
///
/// `solution` must be a live handle; `out_theta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn radner_strategy(
    solution: *const RadnerSolution,
    rank: u32,
    t: f64,
    out_theta: *mut f64,
) -> RadnerStatus {
    guarded(|| {
        let (Some(solution), false) = (solution_ref(solution), out_theta.is_null()) else {
            return failure(RadnerStatus::NullArgument, "solution and out_theta must be non-null");
        };
        let rank = match checked_rank(solution, rank) {
            Ok(rank) => rank,
            Err(status) => return status,
        };
        match solution.strategy(rank, t) {
            Ok(value) => {
                *out_theta = value;
                RadnerStatus::Ok
            }
            Err(e) => failure_from(&e),
        }
    })
}

/// First-order-condition process Y⁽ʲ⁾(t) of the one-based rank `rank`;
/// bounded by ±λ in a valid equilibrium.
///
/// # Safety
///
/// `solution` must be a live handle; `out_y` must be writable.
#[no_mangle]
pub unsafe extern "C" fn radner_foc(
    solution: *const RadnerSolution,
    rank: u32,
    t: f64,
    out_y: *mut f64,
) -> RadnerStatus {
    guarded(|| {
        let (Some(solution), false) = (solution_ref(solution), out_y.is_null()) else {
            return failure(RadnerStatus::NullArgument, "solution and out_y must be non-null");
        };
        let rank = match checked_rank(solution, rank) {
            Ok(rank) => rank,
            Err(status) => return status,
        };
        match solution.foc_process(rank, t) {
            Ok(value) => {
                *out_y = value;
                RadnerStatus::Ok
            }
            Err(e) => failure_from(&e),
        }
    })
}

/// Runs the verification suite on `grid_size` evaluation points.
///
/// Writes the overall verdict to `out_passed`. If `out_report_json` is
/// non-null it additionally receives the full report as a JSON string
/// (release with [`radner_string_free`]). A `false` verdict still returns
/// [`RadnerStatus::Ok`]: the checks ran; they merely found violations.
///
/// # Safety
///
/// `solution` must be a live handle; `out_passed` must be writable;
/// `out_report_json` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn radner_verify_json(
    solution: *const RadnerSolution,
    grid_size: u32,
    out_passed: *mut bool,
    out_report_json: *mut *mut c_char,
) -> RadnerStatus {
    guarded(|| {
        let (Some(solution), false) = (solution_ref(solution), out_passed.is_null()) else {
            return failure(RadnerStatus::NullArgument, "solution and out_passed must be non-null");
        };
        if !(2..=1_000_001).contains(&grid_size) {
            return failure(
                RadnerStatus::InvalidInput,
                &format!("grid_size must be between 2 and 1000001, got {grid_size}"),
            );
        }
        let report = match radner_core::run_all_checks(solution, grid_size as usize) {
            Ok(report) => report,
            Err(e) => return failure_from(&e),
        };
        if !out_report_json.is_null() {
            let rendered = match serde_json::to_string_pretty(&report) {
                Ok(text) => text,
                Err(e) => return failure(RadnerStatus::SolveFailed, &e.to_string()),
            };
            let owned = CString::new(rendered).expect("JSON contains no NUL bytes");
            *out_report_json = owned.into_raw();
        }
        *out_passed = report.passed;
        RadnerStatus::Ok
    })
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
///
/// `text` must be null or a string returned by this library that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn radner_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}
