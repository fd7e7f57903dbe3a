//! Centralized ground truth for the constrained consensus problem,
//! independent of the distributed dynamics.
//!
//! [`solve_kkt`] enumerates all 2^K candidate active sets and solves each
//! stationarity system with damped Newton; exact and exhaustive at desk
//! scale. [`solve_grid`] is a second, deliberately different oracle
//! (multilevel feasible-grid refinement) used to cross-validate the first.

use crate::functions::FieldError;
use crate::problem::{mean_initial_position, Scenario};
use crate::protocol::NetworkState;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

/// Feasibility/optimality tolerance for accepting an enumeration candidate.
pub const KKT_TOLERANCE: f64 = 1e-9;
/// Hard cap on 2^K enumeration.
pub const MAX_ENUMERABLE_CONSTRAINTS: usize = 20;
/// Grid points per axis at every refinement level.
pub const GRID_POINTS_PER_AXIS: usize = 41;
/// Box shrink factor between refinement levels.
pub const GRID_SHRINK: f64 = 4.0;

const NEWTON_MAX_ITERS: usize = 60;
const NEWTON_RESIDUAL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{count} constraints exceed the enumeration bound of {max}")]
    TooManyConstraints { count: usize, max: usize },
    #[error("no feasible candidate: the constraint system appears infeasible")]
    Infeasible,
    #[error("newton failed to converge on every candidate active set")]
    NewtonFailure,
    #[error("grid search supports dimension <= 3, got {0}")]
    GridDimension(usize),
    #[error("grid bounds have {got} axes, problem dimension is {expected}")]
    GridBounds { expected: usize, got: usize },
    #[error("grid refinement needs at least one level")]
    NoLevels,
    #[error("no feasible grid point at the coarsest level")]
    NoFeasibleGridPoint,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Solution of the centralized problem: the common optimum, per-constraint
/// multipliers, and the binding set.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub x_star: DVector<f64>,
    /// One multiplier per (agent, constraint), zero off the active set.
    pub lambda_star: Vec<Vec<f64>>,
    pub active_constraints: BTreeSet<(usize, usize)>,
    pub objective_value: f64,
}

impl KktSolution {
    /// Multipliers stacked in canonical constraint order.
    pub fn lambda_flat(&self) -> Vec<f64> {
        self.lambda_star.iter().flatten().copied().collect()
    }
}

/// First-order optimality residuals of a network state.
///
/// Stationarity aggregates every agent's Lagrangian gradient at the network
/// mean position (the aggregate condition needs one common point);
/// feasibility and complementarity are per-agent quantities and use each
/// agent's own position and multipliers. The consensus residual reports the
/// maximum pairwise distance separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementarity: f64,
    pub consensus: f64,
}

impl KktResiduals {
    pub fn max_optimality(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementarity)
    }
}

/// Sum of the agents' objectives at a common point.
pub fn aggregate_objective(s: &Scenario, x: &DVector<f64>) -> Result<f64, FieldError> {
    let mut acc = 0.0;
    for a in &s.agents {
        acc += a.objective.eval(x)?;
    }
    Ok(acc)
}

/// Aggregate Lagrangian evaluated on the consensus manifold: every agent sits
/// at the same `x`, multipliers are per (agent, constraint).
pub fn consensus_lagrangian(
    s: &Scenario,
    x: &DVector<f64>,
    lambda: &[Vec<f64>],
) -> Result<f64, FieldError> {
    let mut acc = 0.0;
    for (a, lams) in s.agents.iter().zip(lambda) {
        acc += a.objective.eval(x)?;
        for (g, &l) in a.constraints.iter().zip(lams) {
            acc += l * g.eval(x)?;
        }
    }
    Ok(acc)
}

struct CandidateSolution {
    x: DVector<f64>,
    mu: Vec<f64>,
}

enum CandidateOutcome {
    Converged(CandidateSolution),
    Failed,
}

/// Newton iteration on the stationarity system of one candidate active set:
/// `sum_i grad f_i(x) + sum_{k in A} mu_k grad g_k(x) = 0`, `g_k(x) = 0`.
/// Damping halves the step until the residual decreases.
fn solve_candidate(
    s: &Scenario,
    constraints: &[(usize, usize)],
    active: &[usize],
    x_init: &DVector<f64>,
) -> Result<CandidateOutcome, FieldError> {
    let m = s.dim;
    let a = active.len();
    let field = |idx: usize| -> &crate::functions::ScalarField {
        let (agent, k) = constraints[idx];
        &s.agents[agent].constraints[k]
    };

    let residual = |x: &DVector<f64>, mu: &[f64]| -> Result<DVector<f64>, FieldError> {
        let mut r = DVector::zeros(m + a);
        let mut stat = DVector::zeros(m);
        for agent in &s.agents {
            stat += agent.objective.grad(x)?;
        }
        for (slot, &idx) in active.iter().enumerate() {
            stat += field(idx).grad(x)? * mu[slot];
        }
        r.rows_mut(0, m).copy_from(&stat);
        for (slot, &idx) in active.iter().enumerate() {
            r[m + slot] = field(idx).eval(x)?;
        }
        Ok(r)
    };

    let mut x = x_init.clone();
    let mut mu = vec![0.0; a];
    let mut r = residual(&x, &mu)?;

    for _ in 0..NEWTON_MAX_ITERS {
        if r.amax() < NEWTON_RESIDUAL_TOL {
            return Ok(CandidateOutcome::Converged(CandidateSolution { x, mu }));
        }
        // KKT Jacobian: [H G; G^T 0] with H the Lagrangian Hessian and G the
        // active-constraint gradients.
        let mut jac = DMatrix::zeros(m + a, m + a);
        let mut h = DMatrix::zeros(m, m);
        for agent in &s.agents {
            h += agent.objective.hess(&x)?;
        }
        for (slot, &idx) in active.iter().enumerate() {
            h += field(idx).hess(&x)? * mu[slot];
        }
        jac.view_mut((0, 0), (m, m)).copy_from(&h);
        for (slot, &idx) in active.iter().enumerate() {
            let grad = field(idx).grad(&x)?;
            jac.view_mut((0, m + slot), (m, 1)).copy_from(&grad);
            jac.view_mut((m + slot, 0), (1, m))
                .copy_from(&grad.transpose());
        }
        let lu = jac.full_piv_lu();
        let delta = match lu.solve(&(-&r)) {
            Some(d) => d,
            // Singular system (e.g. redundant active constraints): skip the
            // candidate, another active set covers the optimum.
            None => return Ok(CandidateOutcome::Failed),
        };

        let r_norm = r.norm();
        let mut tau = 1.0;
        let mut advanced = false;
        for _ in 0..30 {
            let x_try = &x + DVector::from_iterator(m, delta.rows(0, m).iter().copied()) * tau;
            let mu_try: Vec<f64> = mu
                .iter()
                .enumerate()
                .map(|(slot, &v)| v + tau * delta[m + slot])
                .collect();
            let r_try = residual(&x_try, &mu_try)?;
            if r_try.norm() < r_norm {
                x = x_try;
                mu = mu_try;
                r = r_try;
                advanced = true;
                break;
            }
            tau *= 0.5;
        }
        if !advanced {
            return Ok(CandidateOutcome::Failed);
        }
    }
    if r.amax() < NEWTON_RESIDUAL_TOL {
        Ok(CandidateOutcome::Converged(CandidateSolution { x, mu }))
    } else {
        Ok(CandidateOutcome::Failed)
    }
}

/// Newton start: unconstrained minimizer of the aggregate objective, falling
/// back to the mean initial position when the aggregate Hessian is singular.
fn unconstrained_start(s: &Scenario) -> Result<DVector<f64>, FieldError> {
    let mut x = mean_initial_position(s);
    for _ in 0..NEWTON_MAX_ITERS {
        let mut grad = DVector::zeros(s.dim);
        let mut hess = DMatrix::zeros(s.dim, s.dim);
        for a in &s.agents {
            grad += a.objective.grad(&x)?;
            hess += a.objective.hess(&x)?;
        }
        if grad.amax() < NEWTON_RESIDUAL_TOL {
            break;
        }
        match hess.full_piv_lu().solve(&(-&grad)) {
            Some(delta) => x += delta,
            None => return Ok(mean_initial_position(s)),
        }
    }
    Ok(x)
}

/// Solves the centralized problem by enumerating candidate active sets.
///
/// A candidate is accepted when Newton converges, every inactive constraint
/// is feasible, and every multiplier is dual-feasible, all to
/// [`KKT_TOLERANCE`]; the feasible candidate with the smallest aggregate
/// objective wins.
pub fn solve_kkt(s: &Scenario) -> Result<KktSolution, OracleError> {
    let constraints = s.constraint_pairs();
    let count = constraints.len();
    if count > MAX_ENUMERABLE_CONSTRAINTS {
        return Err(OracleError::TooManyConstraints {
            count,
            max: MAX_ENUMERABLE_CONSTRAINTS,
        });
    }
    let x_init = unconstrained_start(s)?;

    // (objective, x, active multipliers, active indices)
    type Best = (f64, DVector<f64>, Vec<f64>, Vec<usize>);
    let mut best: Option<Best> = None;
    let mut failures = 0usize;
    let total = 1usize << count;

    for mask in 0..total {
        let active: Vec<usize> = (0..count).filter(|k| mask & (1 << k) != 0).collect();
        let outcome = solve_candidate(s, &constraints, &active, &x_init)?;
        let sol = match outcome {
            CandidateOutcome::Converged(sol) => sol,
            CandidateOutcome::Failed => {
                failures += 1;
                continue;
            }
        };
        let primal_ok = {
            let mut ok = true;
            for (idx, &(agent, k)) in constraints.iter().enumerate() {
                if active.contains(&idx) {
                    continue;
                }
                let g = s.agents[agent].constraints[k].eval(&sol.x)?;
                if g > KKT_TOLERANCE {
                    ok = false;
                    break;
                }
            }
            ok
        };
        let dual_ok = sol.mu.iter().all(|&m| m >= -KKT_TOLERANCE);
        if !primal_ok || !dual_ok {
            continue;
        }
        let objective = aggregate_objective(s, &sol.x)?;
        let better = match &best {
            None => true,
            Some((obj, ..)) => objective < *obj,
        };
        if better {
            best = Some((objective, sol.x, sol.mu, active));
        }
    }

    let (objective_value, x_star, mu, active) = match best {
        Some(b) => b,
        None if failures == total => return Err(OracleError::NewtonFailure),
        None => return Err(OracleError::Infeasible),
    };

    let mut lambda_star: Vec<Vec<f64>> = s
        .agents
        .iter()
        .map(|a| vec![0.0; a.constraints.len()])
        .collect();
    let mut active_constraints = BTreeSet::new();
    for (slot, &idx) in active.iter().enumerate() {
        let (agent, k) = constraints[idx];
        lambda_star[agent][k] = mu[slot].max(0.0);
        active_constraints.insert((agent, k));
    }
    Ok(KktSolution {
        x_star,
        lambda_star,
        active_constraints,
        objective_value,
    })
}

/// Multilevel feasible-grid minimizer of the aggregate objective.
///
/// Each level lays [`GRID_POINTS_PER_AXIS`] points per axis over the current
/// box, keeps the best feasible point, and shrinks the box around it by
/// [`GRID_SHRINK`]. Independent of the KKT route by construction.
pub fn solve_grid(
    s: &Scenario,
    bounds: &[(f64, f64)],
    levels: usize,
) -> Result<DVector<f64>, OracleError> {
    if s.dim > 3 {
        return Err(OracleError::GridDimension(s.dim));
    }
    if bounds.len() != s.dim {
        return Err(OracleError::GridBounds {
            expected: s.dim,
            got: bounds.len(),
        });
    }
    if levels == 0 {
        return Err(OracleError::NoLevels);
    }
    let feasible = |x: &DVector<f64>| -> Result<bool, FieldError> {
        for a in &s.agents {
            for g in &a.constraints {
                if g.eval(x)? > 0.0 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    };

    let mut lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let mut hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let mut incumbent: Option<(f64, DVector<f64>)> = None;

    for level in 0..levels {
        let axis_points: Vec<Vec<f64>> = (0..s.dim)
            .map(|d| {
                (0..GRID_POINTS_PER_AXIS)
                    .map(|k| lo[d] + (hi[d] - lo[d]) * k as f64 / (GRID_POINTS_PER_AXIS - 1) as f64)
                    .collect()
            })
            .collect();
        let mut index = vec![0usize; s.dim];
        loop {
            let x = DVector::from_iterator(
                s.dim,
                index.iter().enumerate().map(|(d, &k)| axis_points[d][k]),
            );
            if feasible(&x)? {
                let obj = aggregate_objective(s, &x)?;
                let better = incumbent.as_ref().is_none_or(|(best, _)| obj < *best);
                if better {
                    incumbent = Some((obj, x));
                }
            }
            // Odometer over the lattice.
            let mut d = 0;
            loop {
                if d == s.dim {
                    break;
                }
                index[d] += 1;
                if index[d] < GRID_POINTS_PER_AXIS {
                    break;
                }
                index[d] = 0;
                d += 1;
            }
            if d == s.dim {
                break;
            }
        }
        let center = match &incumbent {
            Some((_, x)) => x.clone(),
            None => return Err(OracleError::NoFeasibleGridPoint),
        };
        if level + 1 < levels {
            for d in 0..s.dim {
                let width = (hi[d] - lo[d]) / GRID_SHRINK;
                lo[d] = center[d] - width / 2.0;
                hi[d] = center[d] + width / 2.0;
            }
        }
    }
    Ok(incumbent.expect("incumbent set by the loop").1)
}

/// Final per-axis spacing of [`solve_grid`] after `levels` refinements.
pub fn grid_resolution(bounds: &[(f64, f64)], levels: usize) -> Vec<f64> {
    bounds
        .iter()
        .map(|(lo, hi)| {
            (hi - lo) / GRID_SHRINK.powi(levels as i32 - 1) / (GRID_POINTS_PER_AXIS - 1) as f64
        })
        .collect()
}

/// First-order residuals of a network state; see [`KktResiduals`] for the
/// evaluation-point convention.
pub fn kkt_residuals(s: &Scenario, state: &NetworkState) -> Result<KktResiduals, FieldError> {
    let mean = state.mean_position();
    let mut stat = DVector::zeros(s.dim);
    for (i, a) in s.agents.iter().enumerate() {
        stat += a.objective.grad(&mean)?;
        for (k, g) in a.constraints.iter().enumerate() {
            let lam = state.multipliers[i][k];
            if lam != 0.0 {
                stat += g.grad(&mean)? * lam;
            }
        }
    }
    let mut primal: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    let mut dual: f64 = 0.0;
    for (i, a) in s.agents.iter().enumerate() {
        for (k, g) in a.constraints.iter().enumerate() {
            let gi = g.eval(&state.positions[i])?;
            let lam = state.multipliers[i][k];
            primal = primal.max(gi);
            complementarity = complementarity.max((lam * gi).abs());
            dual = dual.max(-lam);
        }
    }
    let mut consensus: f64 = 0.0;
    for i in 0..state.positions.len() {
        for j in (i + 1)..state.positions.len() {
            consensus = consensus.max((&state.positions[i] - &state.positions[j]).norm());
        }
    }
    Ok(KktResiduals {
        stationarity: stat.norm(),
        primal_feasibility: primal.max(0.0),
        dual_feasibility: dual.max(0.0),
        complementarity,
        consensus,
    })
}

/// Replicates the oracle optimum to every agent, with the oracle multipliers.
pub fn replicated_state(s: &Scenario, sol: &KktSolution) -> NetworkState {
    NetworkState {
        positions: vec![sol.x_star.clone(); s.agents.len()],
        multipliers: sol.lambda_star.clone(),
        t: 0.0,
    }
}
