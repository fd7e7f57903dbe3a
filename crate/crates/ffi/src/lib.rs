//! C ABI over the simulator: load scenarios, run the hybrid flow, query the
//! oracle, and check certificates from any language that can call C.
//!
//! Conventions:
//! - handles (`SwarmScenario`, `SwarmTrajectory`, `SwarmSolution`) are opaque
//!   pointers owned by this library; release them with the matching `*_free`;
//! - every fallible call returns a [`SwarmStatus`]; on failure
//!   [`swarm_last_error_message`] yields a thread-local description valid
//!   until the next call on the same thread;
//! - scalar getters on null handles return 0.

use seed_swarm::diagnostics;
use seed_swarm::integrator::{self, Trajectory};
use seed_swarm::oracle::{self, KktSolution};
use seed_swarm::problem::Scenario;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwarmStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The scenario failed to parse.
    ParseError = 3,
    /// The scenario parsed but failed validation.
    ValidationError = 4,
    /// The integrator produced a non-finite value.
    IntegrationError = 5,
    /// The oracle found the problem infeasible or out of bounds.
    SolveError = 6,
    /// An index or buffer size did not match the handle's shape.
    OutOfRange = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl AsRef<str>) {
    let sanitized = message.as_ref().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Message for the most recent failure on this thread. Valid until the next
/// library call on the same thread; never null.
#[no_mangle]
pub extern "C" fn swarm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

pub struct SwarmScenario(Scenario);
pub struct SwarmTrajectory(Trajectory);
pub struct SwarmSolution(KktSolution);

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, SwarmStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(SwarmStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        SwarmStatus::InvalidUtf8
    })
}

fn parse_and_validate(text: &str) -> Result<Scenario, SwarmStatus> {
    let scenario = Scenario::from_json(text).map_err(|e| {
        set_error(e.to_string());
        SwarmStatus::ParseError
    })?;
    scenario.validate().map_err(|e| {
        set_error(e.to_string());
        SwarmStatus::ValidationError
    })?;
    Ok(scenario)
}

/// Parses and validates a scenario from JSON text.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn swarm_scenario_from_json(
    json: *const c_char,
    out: *mut *mut SwarmScenario,
) -> SwarmStatus {
    if out.is_null() {
        set_error("null output slot");
        return SwarmStatus::NullArgument;
    }
    let text = match read_utf8(json) {
        Ok(t) => t,
        Err(status) => return status,
    };
    match parse_and_validate(text) {
        Ok(s) => {
            *out = Box::into_raw(Box::new(SwarmScenario(s)));
            SwarmStatus::Ok
        }
        Err(status) => status,
    }
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out` to a writable
/// pointer slot.
#[no_mangle]
pub unsafe extern "C" fn swarm_scenario_load(
    path: *const c_char,
    out: *mut *mut SwarmScenario,
) -> SwarmStatus {
    if out.is_null() {
        set_error("null output slot");
        return SwarmStatus::NullArgument;
    }
    let path = match read_utf8(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            set_error(format!("cannot read {path}: {e}"));
            return SwarmStatus::ParseError;
        }
    };
    match parse_and_validate(&text) {
        Ok(s) => {
            *out = Box::into_raw(Box::new(SwarmScenario(s)));
            SwarmStatus::Ok
        }
        Err(status) => status,
    }
}

/// # Safety
/// `scenario` must come from a `swarm_scenario_*` constructor; passing null
/// is a no-op.
#[no_mangle]
pub unsafe extern "C" fn swarm_scenario_free(scenario: *mut SwarmScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of agents, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn swarm_scenario_agent_count(scenario: *const SwarmScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.agents.len())
}

/// State dimension per agent, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn swarm_scenario_dim(scenario: *const SwarmScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.dim)
}

/// Constraints carried by one agent, or 0 when out of range.
///
/// # Safety
/// `scenario` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn swarm_scenario_constraint_count(
    scenario: *const SwarmScenario,
    agent: usize,
) -> usize {
    scenario
        .as_ref()
        .and_then(|s| s.0.agents.get(agent))
        .map_or(0, |a| a.constraints.len())
}

/// Integrates the scenario's hybrid flow over its full horizon.
///
/// # Safety
/// `scenario` must be a live handle; `out` must point to a writable slot.
#[no_mangle]
pub unsafe extern "C" fn swarm_simulate(
    scenario: *const SwarmScenario,
    out: *mut *mut SwarmTrajectory,
) -> SwarmStatus {
    let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
        set_error("null argument");
        return SwarmStatus::NullArgument;
    };
    match integrator::simulate(&s.0) {
        Ok(traj) => {
            *out = Box::into_raw(Box::new(SwarmTrajectory(traj)));
            SwarmStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            SwarmStatus::IntegrationError
        }
    }
}

/// # Safety
/// `trajectory` must come from `swarm_simulate`; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn swarm_trajectory_free(trajectory: *mut SwarmTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of recorded samples, or 0 for a null handle.
///
/// # Safety
/// `trajectory` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn swarm_trajectory_len(trajectory: *const SwarmTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |t| t.0.len())
}

/// Time of one sample.
///
/// # Safety
/// `trajectory` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swarm_trajectory_time(
    trajectory: *const SwarmTrajectory,
    sample: usize,
    out: *mut f64,
) -> SwarmStatus {
    let (Some(t), false) = (trajectory.as_ref(), out.is_null()) else {
        set_error("null argument");
        return SwarmStatus::NullArgument;
    };
    match t.0.times.get(sample) {
        Some(&time) => {
            *out = time;
            SwarmStatus::Ok
        }
        None => {
            set_error(format!(
                "sample {sample} out of range ({} samples)",
                t.0.len()
            ));
            SwarmStatus::OutOfRange
        }
    }
}

/// Copies one agent's position at one sample into `buffer` (length must
/// equal the scenario dimension).
///
/// # Safety
/// `trajectory` must be a live handle; `buffer` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn swarm_trajectory_position(
    trajectory: *const SwarmTrajectory,
    sample: usize,
    agent: usize,
    buffer: *mut f64,
    len: usize,
) -> SwarmStatus {
    let (Some(t), false) = (trajectory.as_ref(), buffer.is_null()) else {
        set_error("null argument");
        return SwarmStatus::NullArgument;
    };
    let Some(state) = t.0.states.get(sample) else {
        set_error(format!(
            "sample {sample} out of range ({} samples)",
            t.0.len()
        ));
        return SwarmStatus::OutOfRange;
    };
    let Some(position) = state.positions.get(agent) else {
        set_error(format!(
            "agent {agent} out of range ({} agents)",
            state.positions.len()
        ));
        return SwarmStatus::OutOfRange;
    };
    if len != position.len() {
        set_error(format!(
            "buffer holds {len} doubles, position needs {}",
            position.len()
        ));
        return SwarmStatus::OutOfRange;
    }
    for (i, v) in position.iter().enumerate() {
        *buffer.add(i) = *v;
    }
    SwarmStatus::Ok
}

/// One multiplier at one sample.
///
/// # Safety
/// `trajectory` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swarm_trajectory_multiplier(
    trajectory: *const SwarmTrajectory,
    sample: usize,
    agent: usize,
    constraint: usize,
    out: *mut f64,
) -> SwarmStatus {
    let (Some(t), false) = (trajectory.as_ref(), out.is_null()) else {
        set_error("null argument");
        return SwarmStatus::NullArgument;
    };
    let value =
        t.0.states
            .get(sample)
            .and_then(|s| s.multipliers.get(agent))
            .and_then(|m| m.get(constraint));
    match value {
        Some(&v) => {
            *out = v;
            SwarmStatus::Ok
        }
        None => {
            set_error(format!(
                "no multiplier at sample {sample}, agent {agent}, constraint {constraint}"
            ));
            SwarmStatus::OutOfRange
        }
    }
}

/// Solves the centralized problem.
///
/// # Safety
/// `scenario` must be a live handle; `out` must point to a writable slot.
#[no_mangle]
pub unsafe extern "C" fn swarm_solve(
    scenario: *const SwarmScenario,
    out: *mut *mut SwarmSolution,
) -> SwarmStatus {
    let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
        set_error("null argument");
        return SwarmStatus::NullArgument;
    };
    match oracle::solve_kkt(&s.0) {
        Ok(sol) => {
            *out = Box::into_raw(Box::new(SwarmSolution(sol)));
            SwarmStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            SwarmStatus::SolveError
        }
    }
}

/// # Safety
/// `solution` must come from `swarm_solve`; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn swarm_solution_free(solution: *mut SwarmSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Dimension of the optimum, or 0 for a null handle.
///
/// # Safety
/// `solution` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn swarm_solution_dim(solution: *const SwarmSolution) -> usize {
    solution.as_ref().map_or(0, |s| s.0.x_star.len())
}

/// Copies the common optimum into `buffer` (length must equal the dimension).
///
/// # Safety
/// `solution` must be a live handle; `buffer` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn swarm_solution_optimum(
    solution: *const SwarmSolution,
    buffer: *mut f64,
    len: usize,
) -> SwarmStatus {
    let (Some(s), false) = (solution.as_ref(), buffer.is_null()) else {
        set_error("null argument");
        return SwarmStatus::NullArgument;
    };
    if len != s.0.x_star.len() {
        set_error(format!(
            "buffer holds {len} doubles, optimum needs {}",
            s.0.x_star.len()
        ));
        return SwarmStatus::OutOfRange;
    }
    for (i, v) in s.0.x_star.iter().enumerate() {
        *buffer.add(i) = *v;
    }
    SwarmStatus::Ok
}

/// Aggregate objective value at the optimum.
///
/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swarm_solution_objective(
    solution: *const SwarmSolution,
    out: *mut f64,
) -> SwarmStatus {
    let (Some(s), false) = (solution.as_ref(), out.is_null()) else {
        set_error("null argument");
        return SwarmStatus::NullArgument;
    };
    *out = s.0.objective_value;
    SwarmStatus::Ok
}

/// One oracle multiplier (zero off the active set).
///
/// # Safety
/// `solution` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swarm_solution_multiplier(
    solution: *const SwarmSolution,
    agent: usize,
    constraint: usize,
    out: *mut f64,
) -> SwarmStatus {
    let (Some(s), false) = (solution.as_ref(), out.is_null()) else {
        set_error("null argument");
        return SwarmStatus::NullArgument;
    };
    match s.0.lambda_star.get(agent).and_then(|m| m.get(constraint)) {
        Some(&v) => {
            *out = v;
            SwarmStatus::Ok
        }
        None => {
            set_error(format!(
                "no multiplier for agent {agent}, constraint {constraint}"
            ));
            SwarmStatus::OutOfRange
        }
    }
}

/// 1 when the oracle marked the pair binding, 0 otherwise.
///
/// # Safety
/// `solution` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn swarm_solution_is_active(
    solution: *const SwarmSolution,
    agent: usize,
    constraint: usize,
) -> u8 {
    solution.as_ref().map_or(0, |s| {
        u8::from(s.0.active_constraints.contains(&(agent, constraint)))
    })
}

/// Certificate outcomes plus the headline terminal quantities.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SwarmCertificates {
    pub consensus_bound: u8,
    pub boundedness_monotone: u8,
    pub hybrid_monotone: u8,
    pub terminal_kkt: u8,
    pub terminal_consensus_error: f64,
    pub terminal_stationarity: f64,
    pub ultimate_bound: f64,
}

/// Simulates, solves, and checks every certificate in one call.
///
/// # Safety
/// `scenario` must be a live handle; `out` must point to a writable
/// `SwarmCertificates`.
#[no_mangle]
pub unsafe extern "C" fn swarm_check(
    scenario: *const SwarmScenario,
    out: *mut SwarmCertificates,
) -> SwarmStatus {
    let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
        set_error("null argument");
        return SwarmStatus::NullArgument;
    };
    let sol = match oracle::solve_kkt(&s.0) {
        Ok(sol) => sol,
        Err(e) => {
            set_error(e.to_string());
            return SwarmStatus::SolveError;
        }
    };
    let traj = match integrator::simulate(&s.0) {
        Ok(t) => t,
        Err(e) => {
            set_error(e.to_string());
            return SwarmStatus::IntegrationError;
        }
    };
    let report = match diagnostics::certify(&s.0, &traj, &sol) {
        Ok(r) => r,
        Err(e) => {
            set_error(e.to_string());
            return SwarmStatus::IntegrationError;
        }
    };
    let series = match diagnostics::certificate_series(&s.0, &traj, &sol) {
        Ok(series) => series,
        Err(e) => {
            set_error(e.to_string());
            return SwarmStatus::IntegrationError;
        }
    };
    let residuals = match oracle::kkt_residuals(&s.0, traj.terminal()) {
        Ok(r) => r,
        Err(e) => {
            set_error(e.to_string());
            return SwarmStatus::IntegrationError;
        }
    };
    *out = SwarmCertificates {
        consensus_bound: u8::from(report.consensus_bound.passed),
        boundedness_monotone: u8::from(report.boundedness_monotone.passed),
        hybrid_monotone: u8::from(report.hybrid_monotone.passed),
        terminal_kkt: u8::from(report.terminal_kkt.passed),
        terminal_consensus_error: series.consensus.last().map_or(0.0, |c| c.stacked),
        terminal_stationarity: residuals.stationarity,
        ultimate_bound: series.ultimate_bound,
    };
    SwarmStatus::Ok
}
