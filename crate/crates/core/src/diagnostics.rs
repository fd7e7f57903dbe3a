//! Certificate quantities computed along a trajectory, and the report that
//! checks each runtime-verifiable claim of the analysis.
//!
//! Checked claims:
//! - (a) the terminal consensus error sits inside the ultimate bound
//!   `omega0 * alpha / (beta * v2 * theta)`, with `omega0` measured as the
//!   running maximum of pairwise node-Lagrangian gradient spreads;
//! - (b) the boundedness Lyapunov function
//!   `W = (1/2 alpha) ||xbar - xbar*||^2 + (1/2) ||lambda - lambda*||^2`
//!   is non-increasing step to step;
//! - (c) the hybrid Lyapunov function
//!   `V = (1/2 alpha) sum ||xdot_i||^2 + (1/2) sum_{notin sigma} ldot_ik^2`
//!   is non-increasing inside every maximal fixed-sigma interval, continuous
//!   across sigma-shrink events, and may only drop across sigma-growth;
//! - (d) terminal KKT residuals are small.
//!
//! The continuous claims hold exactly only in the dt -> 0 limit, so every
//! discrete monotonicity check carries a per-step slack
//! `10 * dt^2 * L` where `L` is an empirical bound on the second time
//! derivative of the checked quantity, sampled along the run.

use crate::functions::FieldError;
use crate::graph::GraphError;
use crate::integrator::{sigma_series, SimError, Trajectory};
use crate::oracle::{self, KktSolution};
use crate::problem::Scenario;
use crate::protocol::{self, ActiveSet, NetworkState};
use nalgebra::DVector;
use serde::Serialize;
use std::fmt;
use thiserror::Error;

/// Fixed fraction of the decay margin assigned to the ultimate bound.
pub const DEFAULT_THETA: f64 = 0.5;
/// Multiplier on `dt^2 * L` in the discrete monotonicity slack.
pub const MONOTONE_SLACK_FACTOR: f64 = 10.0;
/// Gate on the terminal KKT residuals in certificate (d).
pub const TERMINAL_KKT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("trajectory is empty")]
    EmptyTrajectory,
}

/// Deviation of the stacked positions from the network average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusError {
    /// `||Pi xbar_d||` for each coordinate d.
    pub per_coordinate: Vec<f64>,
    /// Norm of the full stacked deviation.
    pub stacked: f64,
    pub max_pairwise: f64,
}

/// `Pi xbar` per coordinate plus the maximum pairwise distance.
pub fn consensus_error(state: &NetworkState) -> ConsensusError {
    let n = state.positions.len();
    let dim = state.positions.first().map_or(0, DVector::len);
    let mean = state.mean_position();
    let mut per_coordinate = vec![0.0; dim];
    for x in &state.positions {
        for d in 0..dim {
            let e = x[d] - mean[d];
            per_coordinate[d] += e * e;
        }
    }
    let stacked = per_coordinate.iter().sum::<f64>().sqrt();
    for v in &mut per_coordinate {
        *v = v.sqrt();
    }
    let mut max_pairwise: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            max_pairwise = max_pairwise.max((&state.positions[i] - &state.positions[j]).norm());
        }
    }
    ConsensusError {
        per_coordinate,
        stacked,
        max_pairwise,
    }
}

/// Quadratic distance to the oracle saddle point:
/// `(1/2 alpha) sum_i ||x_i - x*||^2 + (1/2) sum_ik (lambda_ik - lambda*_ik)^2`.
pub fn lyapunov_w(s: &Scenario, state: &NetworkState, sol: &KktSolution) -> f64 {
    let mut primal = 0.0;
    for x in &state.positions {
        let d = x - &sol.x_star;
        primal += d.dot(&d);
    }
    let mut dual = 0.0;
    for (lams, stars) in state.multipliers.iter().zip(&sol.lambda_star) {
        for (&l, &ls) in lams.iter().zip(stars) {
            dual += (l - ls) * (l - ls);
        }
    }
    primal / (2.0 * s.alpha) + dual / 2.0
}

/// Rate energy with the active projection set excluded from the dual sum:
/// `(1/2 alpha) sum_i ||u_i||^2 + (1/2) sum_{(i,k) notin sigma} ldot_ik^2`.
pub fn lyapunov_v(s: &Scenario, state: &NetworkState) -> Result<(f64, ActiveSet), FieldError> {
    let sigma = protocol::active_set(s, state)?;
    let mut kinetic = 0.0;
    let mut dual = 0.0;
    for (i, agent) in s.agents.iter().enumerate() {
        let u = protocol::control_input(s, state, i)?;
        kinetic += u.dot(&u);
        let rates = protocol::dual_rate(agent, &state.positions[i], &state.multipliers[i])?;
        for (k, r) in rates.iter().enumerate() {
            if !sigma.contains(i, k) {
                dual += r * r;
            }
        }
    }
    Ok((kinetic / (2.0 * s.alpha) + dual / 2.0, sigma))
}

/// Largest pairwise spread of node-Lagrangian gradients,
/// `max_ij ||grad L_i(x_i) - grad L_j(x_j)||`, the measured stand-in for the
/// perturbation bound the consensus analysis assumes.
pub fn gradient_spread(s: &Scenario, state: &NetworkState) -> Result<f64, FieldError> {
    let grads: Vec<DVector<f64>> = s
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| protocol::node_lagrangian_grad(a, &state.positions[i], &state.multipliers[i]))
        .collect::<Result<_, _>>()?;
    let mut spread: f64 = 0.0;
    for i in 0..grads.len() {
        for j in (i + 1)..grads.len() {
            spread = spread.max((&grads[i] - &grads[j]).norm());
        }
    }
    Ok(spread)
}

/// Per-sample certificate quantities for one trajectory.
#[derive(Debug, Clone)]
pub struct CertificateSeries {
    pub times: Vec<f64>,
    pub consensus: Vec<ConsensusError>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma: Vec<ActiveSet>,
    pub omega: Vec<f64>,
    /// Running maximum of `omega` over the whole run.
    pub omega_max: f64,
    pub theta: f64,
    /// `omega_max * alpha / (beta * v2 * theta)`; zero for single-node nets
    /// where the consensus error is identically zero.
    pub ultimate_bound: f64,
}

pub fn certificate_series(
    s: &Scenario,
    traj: &Trajectory,
    sol: &KktSolution,
) -> Result<CertificateSeries, DiagnosticsError> {
    certificate_series_with_theta(s, traj, sol, DEFAULT_THETA)
}

pub fn certificate_series_with_theta(
    s: &Scenario,
    traj: &Trajectory,
    sol: &KktSolution,
    theta: f64,
) -> Result<CertificateSeries, DiagnosticsError> {
    if traj.is_empty() {
        return Err(DiagnosticsError::EmptyTrajectory);
    }
    let sigma = sigma_series(s, traj)?;
    let mut consensus = Vec::with_capacity(traj.len());
    let mut w = Vec::with_capacity(traj.len());
    let mut v = Vec::with_capacity(traj.len());
    let mut omega = Vec::with_capacity(traj.len());
    for state in &traj.states {
        consensus.push(consensus_error(state));
        w.push(lyapunov_w(s, state, sol));
        let (value, _) = lyapunov_v(s, state)?;
        v.push(value);
        omega.push(gradient_spread(s, state)?);
    }
    let omega_max = omega.iter().copied().fold(0.0, f64::max);
    let ultimate_bound = if s.topology.node_count() < 2 {
        0.0
    } else {
        let v2 = s.topology.algebraic_connectivity()?;
        omega_max * s.alpha / (s.beta * v2 * theta)
    };
    Ok(CertificateSeries {
        times: traj.times.clone(),
        consensus,
        w,
        v,
        sigma,
        omega,
        omega_max,
        theta,
        ultimate_bound,
    })
}

/// Outcome of one certificate check.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateCheck {
    pub passed: bool,
    pub violations: usize,
    /// Per-step slack used by the monotonicity checks (0 where unused).
    pub slack: f64,
    /// Worst signed excess over the allowed increase (negative = margin).
    pub worst_excess: f64,
    pub detail: String,
}

/// Pass/fail map over the four certificates.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub consensus_bound: CertificateCheck,
    pub boundedness_monotone: CertificateCheck,
    pub hybrid_monotone: CertificateCheck,
    pub terminal_kkt: CertificateCheck,
}

impl CertificateReport {
    pub fn all_passed(&self) -> bool {
        self.consensus_bound.passed
            && self.boundedness_monotone.passed
            && self.hybrid_monotone.passed
            && self.terminal_kkt.passed
    }

    pub fn passed_map(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("consensus_bound", self.consensus_bound.passed),
            ("boundedness_monotone", self.boundedness_monotone.passed),
            ("hybrid_monotone", self.hybrid_monotone.passed),
            ("terminal_kkt", self.terminal_kkt.passed),
        ]
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, check) in [
            ("consensus ultimate bound", &self.consensus_bound),
            ("W non-increasing", &self.boundedness_monotone),
            ("V non-increasing per sigma interval", &self.hybrid_monotone),
            ("terminal KKT residuals", &self.terminal_kkt),
        ] {
            writeln!(
                f,
                "{}: {} ({})",
                name,
                if check.passed { "pass" } else { "FAIL" },
                check.detail
            )?;
        }
        Ok(())
    }
}

/// Empirical bound on |d^2 q / dt^2| from second differences, restricted to
/// triples whose center index passes `center_ok`.
fn second_difference_bound<F: Fn(usize) -> bool>(q: &[f64], dt: f64, center_ok: F) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 1..q.len().saturating_sub(1) {
        if center_ok(i) {
            worst = worst.max((q[i + 1] - 2.0 * q[i] + q[i - 1]).abs() / (dt * dt));
        }
    }
    worst
}

/// Checks every certificate on a completed trajectory. Failures are report
/// entries, never errors.
pub fn certify(
    s: &Scenario,
    traj: &Trajectory,
    sol: &KktSolution,
) -> Result<CertificateReport, DiagnosticsError> {
    let series = certificate_series(s, traj, sol)?;
    let dt = s.dt;

    // (a) terminal consensus error against the ultimate bound.
    let terminal_consensus = series.consensus.last().expect("nonempty").stacked;
    let consensus_bound = {
        let passed = terminal_consensus <= series.ultimate_bound;
        CertificateCheck {
            passed,
            violations: usize::from(!passed),
            slack: 0.0,
            worst_excess: terminal_consensus - series.ultimate_bound,
            detail: format!(
                "terminal ||e_x|| = {terminal_consensus:.6e}, bound = {:.6e} \
                 (omega0 = {:.3e}, theta = {})",
                series.ultimate_bound, series.omega_max, series.theta
            ),
        }
    };

    // (b) W monotone with per-step slack.
    let boundedness_monotone = {
        let l_w = second_difference_bound(&series.w, dt, |_| true);
        let eps = MONOTONE_SLACK_FACTOR * dt * dt * l_w;
        let mut violations = 0;
        let mut worst: f64 = f64::NEG_INFINITY;
        for i in 0..series.w.len().saturating_sub(1) {
            let excess = series.w[i + 1] - series.w[i] - eps;
            worst = worst.max(excess);
            if excess > 0.0 {
                violations += 1;
            }
        }
        CertificateCheck {
            passed: violations == 0,
            violations,
            slack: eps,
            worst_excess: if worst == f64::NEG_INFINITY {
                0.0
            } else {
                worst
            },
            detail: format!(
                "{violations} violations over {} steps (slack {eps:.3e})",
                series.w.len().saturating_sub(1)
            ),
        }
    };

    // (c) V monotone inside fixed-sigma intervals; continuity across
    // shrinks; drops allowed across growth.
    let hybrid_monotone = {
        // The curvature estimate only uses triples inside one sigma interval;
        // jumps across transitions would inflate it artificially.
        let l_v = second_difference_bound(&series.v, dt, |i| {
            series.sigma[i - 1] == series.sigma[i] && series.sigma[i] == series.sigma[i + 1]
        });
        let l_v = if l_v > 0.0 {
            l_v
        } else {
            second_difference_bound(&series.v, dt, |_| true)
        };
        let eps = MONOTONE_SLACK_FACTOR * dt * dt * l_v;
        let mut violations = 0;
        let mut worst: f64 = f64::NEG_INFINITY;
        for i in 0..series.v.len().saturating_sub(1) {
            let dv = series.v[i + 1] - series.v[i];
            let (excess, _kind) = if series.sigma[i + 1] == series.sigma[i] {
                (dv - eps, "fixed")
            } else if series.sigma[i + 1].is_superset(&series.sigma[i]) {
                // Growth removes dual terms from V: allowed to drop.
                (dv - eps, "growth")
            } else if series.sigma[i + 1].is_subset(&series.sigma[i]) {
                // Shrink adds a term that enters at zero: continuity.
                (dv.abs() - eps, "shrink")
            } else {
                // Simultaneous enter and exit: bound the increase.
                (dv - eps, "mixed")
            };
            worst = worst.max(excess);
            if excess > 0.0 {
                violations += 1;
            }
        }
        CertificateCheck {
            passed: violations == 0,
            violations,
            slack: eps,
            worst_excess: if worst == f64::NEG_INFINITY {
                0.0
            } else {
                worst
            },
            detail: format!(
                "{violations} violations over {} steps, {} sigma transitions (slack {eps:.3e})",
                series.v.len().saturating_sub(1),
                traj.events.len()
            ),
        }
    };

    // (d) terminal KKT residuals.
    let terminal_kkt = {
        let r = oracle::kkt_residuals(s, traj.terminal())?;
        let worst = r.max_optimality();
        let passed = worst <= TERMINAL_KKT_TOLERANCE;
        CertificateCheck {
            passed,
            violations: usize::from(!passed),
            slack: 0.0,
            worst_excess: worst - TERMINAL_KKT_TOLERANCE,
            detail: format!(
                "stationarity {:.3e}, primal {:.3e}, dual {:.3e}, complementarity {:.3e} \
                 (gate {TERMINAL_KKT_TOLERANCE:.0e})",
                r.stationarity, r.primal_feasibility, r.dual_feasibility, r.complementarity
            ),
        }
    };

    Ok(CertificateReport {
        consensus_bound,
        boundedness_monotone,
        hybrid_monotone,
        terminal_kkt,
    })
}
