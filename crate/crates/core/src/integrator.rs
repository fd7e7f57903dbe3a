//! Fixed-step integration of the hybrid flow with projection-consistent
//! handling of the multiplier non-negativity boundary.
//!
//! Both methods are explicit. The dual projection is evaluated inside every
//! stage, stage states are clamped back to `lambda >= 0`, and the completed
//! step clamps once more to remove round-off undershoot, so zero is attained
//! exactly. Times are computed as `k * dt` (not accumulated), which makes
//! repeated runs bit-identical.

use crate::problem::{Method, Scenario};
use crate::protocol::{self, ActiveSet, NetworkState};
use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("non-finite {quantity} for agent {agent} at t = {t}")]
    NonFinite {
        t: f64,
        agent: usize,
        quantity: &'static str,
    },
    #[error(transparent)]
    Field(#[from] crate::functions::FieldError),
    #[error("settling window {window} exceeds the trajectory span {span}")]
    WindowTooLong { window: f64, span: f64 },
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

/// A change of active-set membership detected between two samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaTransition {
    /// The pair joined sigma: its projection started clipping.
    Enter,
    /// The pair left sigma.
    Exit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaEvent {
    pub t: f64,
    pub agent: usize,
    pub constraint: usize,
    pub transition: SigmaTransition,
}

/// Rate magnitudes recorded at each sample, used by settling checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub max_control_norm: f64,
    pub max_dual_rate: f64,
}

/// Time-indexed record of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<NetworkState>,
    pub step_diagnostics: Vec<StepDiagnostics>,
    pub events: Vec<SigmaEvent>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn terminal(&self) -> &NetworkState {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }
}

struct Rates {
    velocities: Vec<DVector<f64>>,
    dual: Vec<Vec<f64>>,
}

impl Rates {
    fn max_control_norm(&self) -> f64 {
        self.velocities.iter().map(|u| u.norm()).fold(0.0, f64::max)
    }

    fn max_dual_rate(&self) -> f64 {
        self.dual
            .iter()
            .flat_map(|r| r.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }
}

fn network_rates(s: &Scenario, state: &NetworkState) -> Result<Rates, SimError> {
    let n = state.agent_count();
    let mut velocities = Vec::with_capacity(n);
    let mut dual = Vec::with_capacity(n);
    for i in 0..n {
        let u = protocol::control_input(s, state, i)?;
        if !u.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite {
                t: state.t,
                agent: i,
                quantity: "control input",
            });
        }
        let r = protocol::dual_rate(&s.agents[i], &state.positions[i], &state.multipliers[i])?;
        if !r.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite {
                t: state.t,
                agent: i,
                quantity: "dual rate",
            });
        }
        velocities.push(u);
        dual.push(r);
    }
    Ok(Rates { velocities, dual })
}

/// `base + h * rate`, multipliers clamped to zero from below.
fn advanced(base: &NetworkState, rates: &Rates, h: f64) -> NetworkState {
    let positions = base
        .positions
        .iter()
        .zip(&rates.velocities)
        .map(|(x, u)| x + u * h)
        .collect();
    let multipliers = base
        .multipliers
        .iter()
        .zip(&rates.dual)
        .map(|(lams, rs)| {
            lams.iter()
                .zip(rs)
                .map(|(&l, &r)| (l + h * r).max(0.0))
                .collect()
        })
        .collect();
    NetworkState {
        positions,
        multipliers,
        t: base.t + h,
    }
}

fn euler_step(s: &Scenario, state: &NetworkState, dt: f64) -> Result<NetworkState, SimError> {
    let rates = network_rates(s, state)?;
    Ok(advanced(state, &rates, dt))
}

fn rk4_step(s: &Scenario, state: &NetworkState, dt: f64) -> Result<NetworkState, SimError> {
    let k1 = network_rates(s, state)?;
    let k2 = network_rates(s, &advanced(state, &k1, dt / 2.0))?;
    let k3 = network_rates(s, &advanced(state, &k2, dt / 2.0))?;
    let k4 = network_rates(s, &advanced(state, &k3, dt))?;
    let n = state.agent_count();
    let mut combined = Rates {
        velocities: Vec::with_capacity(n),
        dual: Vec::with_capacity(n),
    };
    for i in 0..n {
        combined.velocities.push(
            (&k1.velocities[i]
                + &k2.velocities[i] * 2.0
                + &k3.velocities[i] * 2.0
                + &k4.velocities[i])
                / 6.0,
        );
        combined.dual.push(
            k1.dual[i]
                .iter()
                .zip(&k2.dual[i])
                .zip(&k3.dual[i])
                .zip(&k4.dual[i])
                .map(|(((a, b), c), d)| (a + 2.0 * b + 2.0 * c + d) / 6.0)
                .collect(),
        );
    }
    Ok(advanced(state, &combined, dt))
}

fn step_by(s: &Scenario, state: &NetworkState, dt: f64) -> Result<NetworkState, SimError> {
    let next = match s.method {
        Method::Euler => euler_step(s, state, dt)?,
        Method::Rk4 => rk4_step(s, state, dt)?,
    };
    for (i, x) in next.positions.iter().enumerate() {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite {
                t: next.t,
                agent: i,
                quantity: "position",
            });
        }
    }
    Ok(next)
}

/// One full step of the scenario's method and step size.
pub fn step(s: &Scenario, state: &NetworkState) -> Result<NetworkState, SimError> {
    step_by(s, state, s.dt)
}

/// Integrates from t = 0 to `t_final`, recording every sample, per-sample
/// rate magnitudes, and active-set transition events. Deterministic: two
/// runs on the same scenario produce bit-identical trajectories.
pub fn simulate(s: &Scenario) -> Result<Trajectory, SimError> {
    let full_steps = (s.t_final / s.dt).floor() as usize;
    let remainder = s.t_final - full_steps as f64 * s.dt;
    let partial = remainder > 1e-12 * s.t_final.max(1.0);

    let mut state = NetworkState::initial(s);
    let mut times = Vec::with_capacity(full_steps + 2);
    let mut states = Vec::with_capacity(full_steps + 2);
    let mut step_diagnostics = Vec::with_capacity(full_steps + 2);
    let mut events = Vec::new();
    let mut sigma = protocol::active_set(s, &state)?;

    let record = |state: &NetworkState, diags: &mut Vec<StepDiagnostics>| -> Result<(), SimError> {
        let rates = network_rates(s, state)?;
        diags.push(StepDiagnostics {
            max_control_norm: rates.max_control_norm(),
            max_dual_rate: rates.max_dual_rate(),
        });
        Ok(())
    };

    record(&state, &mut step_diagnostics)?;
    times.push(0.0);
    states.push(state.clone());

    for k in 0..full_steps + usize::from(partial) {
        let (dt, t_next) = if k < full_steps {
            (s.dt, (k + 1) as f64 * s.dt)
        } else {
            (remainder, s.t_final)
        };
        let mut next = step_by(s, &state, dt)?;
        next.t = t_next;
        debug_assert!(next.multipliers.iter().flatten().all(|&l| l >= 0.0));

        let sigma_next = protocol::active_set(s, &next)?;
        if sigma_next != sigma {
            for (agent, constraint) in sigma_next.difference(&sigma) {
                events.push(SigmaEvent {
                    t: t_next,
                    agent,
                    constraint,
                    transition: SigmaTransition::Enter,
                });
            }
            for (agent, constraint) in sigma.difference(&sigma_next) {
                events.push(SigmaEvent {
                    t: t_next,
                    agent,
                    constraint,
                    transition: SigmaTransition::Exit,
                });
            }
            sigma = sigma_next;
        }

        record(&next, &mut step_diagnostics)?;
        times.push(t_next);
        states.push(next.clone());
        state = next;
    }

    Ok(Trajectory {
        times,
        states,
        step_diagnostics,
        events,
    })
}

/// True when every rate magnitude in the trailing `window` seconds stays
/// below `tol`.
pub fn has_settled(traj: &Trajectory, tol: f64, window: f64) -> Result<bool, SimError> {
    let (first, last) = match (traj.times.first(), traj.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(SimError::EmptyTrajectory),
    };
    let span = last - first;
    if window > span {
        return Err(SimError::WindowTooLong { window, span });
    }
    let cutoff = last - window;
    Ok(traj
        .times
        .iter()
        .zip(&traj.step_diagnostics)
        .filter(|(&t, _)| t >= cutoff)
        .all(|(_, d)| d.max_control_norm < tol && d.max_dual_rate < tol))
}

/// Returns the active set at every recorded sample.
pub fn sigma_series(s: &Scenario, traj: &Trajectory) -> Result<Vec<ActiveSet>, SimError> {
    traj.states
        .iter()
        .map(|st| protocol::active_set(s, st).map_err(SimError::from))
        .collect()
}
