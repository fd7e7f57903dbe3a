//! Right-hand side of the hybrid flow: per-agent control inputs, projected
//! dual rates, and active-set bookkeeping.
//!
//! Information locality is structural: the consensus term is computed by
//! [`consensus_input`], which receives nothing but the agent's own position
//! and its neighbors' positions. No code path reads a neighbor's objective,
//! constraints, or multipliers.

use crate::functions::FieldError;
use crate::problem::{AgentSpec, Scenario};
use nalgebra::DVector;
use std::collections::BTreeSet;

/// Stacked network state: one position per agent, one multiplier per
/// (agent, constraint) pair, and the current time.
///
/// Invariant maintained by the integrator: every multiplier is >= 0, with 0
/// attained exactly after clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub positions: Vec<DVector<f64>>,
    pub multipliers: Vec<Vec<f64>>,
    pub t: f64,
}

impl NetworkState {
    pub fn initial(s: &Scenario) -> Self {
        Self {
            positions: s.agents.iter().map(|a| a.x0.clone()).collect(),
            multipliers: s.agents.iter().map(|a| a.lambda0.clone()).collect(),
            t: 0.0,
        }
    }

    pub fn agent_count(&self) -> usize {
        self.positions.len()
    }

    pub fn mean_position(&self) -> DVector<f64> {
        let dim = self.positions.first().map_or(0, DVector::len);
        let mut mean = DVector::zeros(dim);
        for x in &self.positions {
            mean += x;
        }
        mean / self.positions.len() as f64
    }
}

/// Set of (agent, constraint) pairs where the dual projection is clipping:
/// multiplier exactly zero and constraint strictly satisfied.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet {
    members: BTreeSet<(usize, usize)>,
}

impl ActiveSet {
    pub fn members(&self) -> &BTreeSet<(usize, usize)> {
        &self.members
    }

    pub fn contains(&self, agent: usize, constraint: usize) -> bool {
        self.members.contains(&(agent, constraint))
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// Membership packed into a u64 over the canonical constraint order.
    /// `None` when the scenario has more than 64 constraints.
    pub fn bitmask(&self, pairs: &[(usize, usize)]) -> Option<u64> {
        if pairs.len() > 64 {
            return None;
        }
        let mut mask = 0u64;
        for (bit, pair) in pairs.iter().enumerate() {
            if self.members.contains(pair) {
                mask |= 1 << bit;
            }
        }
        Some(mask)
    }

    /// Pairs in `self` but not in `other`.
    pub fn difference(&self, other: &ActiveSet) -> Vec<(usize, usize)> {
        self.members.difference(&other.members).copied().collect()
    }

    pub fn is_superset(&self, other: &ActiveSet) -> bool {
        self.members.is_superset(&other.members)
    }

    pub fn is_subset(&self, other: &ActiveSet) -> bool {
        self.members.is_subset(&other.members)
    }
}

impl FromIterator<(usize, usize)> for ActiveSet {
    fn from_iter<T: IntoIterator<Item = (usize, usize)>>(iter: T) -> Self {
        Self {
            members: iter.into_iter().collect(),
        }
    }
}

/// Positive projection `[p]_q^+`: passes `p` when `p > 0` or `q > 0`,
/// clips to zero otherwise. At the boundary `p = 0, q = 0` both branches
/// agree, so no tie-break is needed.
pub fn positive_projection(p: f64, q: f64) -> f64 {
    if p > 0.0 || q > 0.0 {
        p
    } else {
        0.0
    }
}

/// Consensus feedback from relative positions only:
/// `-beta * sum_j w_j * (own - neighbor_j)`.
pub fn consensus_input(
    beta: f64,
    own: &DVector<f64>,
    neighbors: &[(f64, &DVector<f64>)],
) -> DVector<f64> {
    let mut acc = DVector::zeros(own.len());
    for (weight, pos) in neighbors {
        acc += (own - *pos) * *weight;
    }
    acc * (-beta)
}

/// `h_i` for one agent, gathered from its graph neighborhood.
pub fn consensus_term(s: &Scenario, state: &NetworkState, agent: usize) -> DVector<f64> {
    let neighbors: Vec<(f64, &DVector<f64>)> = s
        .topology
        .neighbor_weights(agent)
        .expect("agent index within topology")
        .into_iter()
        .map(|(j, w)| (w, &state.positions[j]))
        .collect();
    consensus_input(s.beta, &state.positions[agent], &neighbors)
}

/// Gradient of the node Lagrangian `L_i = f_i + sum_k lambda_ik g_ik` in x.
pub fn node_lagrangian_grad(
    agent: &AgentSpec,
    xi: &DVector<f64>,
    lami: &[f64],
) -> Result<DVector<f64>, FieldError> {
    debug_assert_eq!(lami.len(), agent.constraints.len());
    let mut grad = agent.objective.grad(xi)?;
    for (g, &lam) in agent.constraints.iter().zip(lami) {
        debug_assert!(lam >= 0.0, "multipliers stay non-negative");
        if lam != 0.0 {
            grad += g.grad(xi)? * lam;
        }
    }
    Ok(grad)
}

/// Control input `u_i = -alpha * grad L_i + h_i`.
pub fn control_input(
    s: &Scenario,
    state: &NetworkState,
    agent: usize,
) -> Result<DVector<f64>, FieldError> {
    let spec = &s.agents[agent];
    let grad = node_lagrangian_grad(spec, &state.positions[agent], &state.multipliers[agent])?;
    Ok(grad * (-s.alpha) + consensus_term(s, state, agent))
}

/// Projected dual rates, one per constraint:
/// `g_ik(x_i)` when the projection is inactive, 0 otherwise.
pub fn dual_rate(
    agent: &AgentSpec,
    xi: &DVector<f64>,
    lami: &[f64],
) -> Result<Vec<f64>, FieldError> {
    agent
        .constraints
        .iter()
        .zip(lami)
        .map(|(g, &lam)| Ok(positive_projection(g.eval(xi)?, lam)))
        .collect()
}

/// Current active projection set: multiplier exactly zero (clamping makes
/// zero exactly representable) and constraint strictly satisfied.
pub fn active_set(s: &Scenario, state: &NetworkState) -> Result<ActiveSet, FieldError> {
    let mut members = BTreeSet::new();
    for (i, agent) in s.agents.iter().enumerate() {
        for (k, g) in agent.constraints.iter().enumerate() {
            if state.multipliers[i][k] == 0.0 && g.eval(&state.positions[i])? < 0.0 {
                members.insert((i, k));
            }
        }
    }
    Ok(ActiveSet { members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::ScalarField;
    use crate::graph::Topology;
    use crate::problem::Method;
    use crate::test_fixtures::{ring4_scenario, vec2};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn consensus_term_vanishes_at_consensus() {
        let s = ring4_scenario();
        let mut state = NetworkState::initial(&s);
        for x in &mut state.positions {
            *x = vec2(0.7, -0.3);
        }
        for i in 0..4 {
            assert_eq!(consensus_term(&s, &state, i), vec2(0.0, 0.0));
        }
    }

    #[test]
    fn consensus_term_hand_sum() {
        // Ring neighbors of agent 0 are 1 and 3; with positions alternating
        // between (0,0) and (1,0) and beta = 10 the pull is (20, 0).
        let s = ring4_scenario();
        let mut state = NetworkState::initial(&s);
        state.positions = vec![
            vec2(0.0, 0.0),
            vec2(1.0, 0.0),
            vec2(0.0, 0.0),
            vec2(1.0, 0.0),
        ];
        let h0 = consensus_term(&s, &state, 0);
        assert_relative_eq!(h0, vec2(20.0, 0.0), epsilon = 1e-14);
    }

    #[test]
    fn consensus_term_isolated_agent_is_zero() {
        let mut s = ring4_scenario();
        s.topology = Topology::new(4, []).unwrap();
        let state = NetworkState::initial(&s);
        assert_eq!(consensus_term(&s, &state, 2), vec2(0.0, 0.0));
    }

    #[test]
    fn node_lagrangian_grad_reference() {
        // f = x^2 unconstrained at x = 3.
        let a = crate::problem::AgentSpec {
            objective: ScalarField::quadratic(
                DMatrix::from_element(1, 1, 1.0),
                DVector::from_vec(vec![0.0]),
                DVector::from_vec(vec![0.0]),
                0.0,
            )
            .unwrap(),
            constraints: vec![],
            x0: DVector::from_vec(vec![0.0]),
            lambda0: vec![],
        };
        let g = node_lagrangian_grad(&a, &DVector::from_vec(vec![3.0]), &[]).unwrap();
        assert_eq!(g[0], 6.0);

        // f = x^2, g = 1 - x, lambda = 2: at the KKT point x = 1 the node
        // Lagrangian is stationary.
        let a = crate::problem::AgentSpec {
            objective: a.objective.clone(),
            constraints: vec![ScalarField::affine(DVector::from_vec(vec![-1.0]), 1.0).unwrap()],
            x0: DVector::from_vec(vec![0.0]),
            lambda0: vec![0.0],
        };
        let g = node_lagrangian_grad(&a, &DVector::from_vec(vec![1.0]), &[2.0]).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn node_lagrangian_grad_flat_coordinate() {
        // Agent 3's objective has no second-coordinate term: gradient is zero
        // at x1 = 1 regardless of x2.
        let s = ring4_scenario();
        let g = node_lagrangian_grad(&s.agents[3], &vec2(1.0, -7.3), &[]).unwrap();
        assert_eq!(g, vec2(0.0, 0.0));
    }

    #[test]
    fn control_input_initial_hand_value() {
        // At the initial state, agent 0 sees neighbors 1 at (1,4) and 3 at
        // (5,0): u = -0.1*(4,6) - 10*((2-1)+(2-5), (3-4)+(3-0)) = (19.6, -20.6).
        let s = ring4_scenario();
        let state = NetworkState::initial(&s);
        let u0 = control_input(&s, &state, 0).unwrap();
        assert_relative_eq!(u0, vec2(19.6, -20.6), epsilon = 1e-12);
    }

    #[test]
    fn control_input_vanishes_at_stationary_consensus() {
        // All agents at the same point, each at its own Lagrangian stationary
        // point: place every agent at its objective center with no active
        // multipliers, using identical centers.
        let eye = DMatrix::identity(2, 2);
        let center = vec2(1.0, -2.0);
        let agents: Vec<_> = (0..3)
            .map(|_| crate::problem::AgentSpec {
                objective: ScalarField::quadratic(eye.clone(), center.clone(), vec2(0.0, 0.0), 0.0)
                    .unwrap(),
                constraints: vec![],
                x0: center.clone(),
                lambda0: vec![],
            })
            .collect();
        let s = Scenario {
            topology: Topology::ring(3).unwrap(),
            agents,
            alpha: 0.25,
            beta: 5.0,
            dim: 2,
            dt: 1e-2,
            t_final: 1.0,
            method: Method::Euler,
            seed: 0,
        };
        let state = NetworkState::initial(&s);
        for i in 0..3 {
            assert_eq!(control_input(&s, &state, i).unwrap(), vec2(0.0, 0.0));
        }
    }

    #[test]
    fn control_input_beta_zero_is_pure_descent() {
        // beta = 0 fails validation but the rate functions are total: the
        // consensus term drops out and only local descent remains.
        let mut s = ring4_scenario();
        s.beta = 0.0;
        let state = NetworkState::initial(&s);
        let u = control_input(&s, &state, 0).unwrap();
        let grad = node_lagrangian_grad(&s.agents[0], &state.positions[0], &[0.0]).unwrap();
        assert_relative_eq!(u, grad * (-s.alpha), epsilon = 1e-12);
    }

    #[test]
    fn dual_rate_projection_cases() {
        // g(x) = 1 - x in 1-D.
        let a = crate::problem::AgentSpec {
            objective: ScalarField::affine(DVector::from_vec(vec![0.0]), 0.0).unwrap(),
            constraints: vec![ScalarField::affine(DVector::from_vec(vec![-1.0]), 1.0).unwrap()],
            x0: DVector::from_vec(vec![0.0]),
            lambda0: vec![0.0],
        };
        // lambda = 0, g = -0.5: projection active, rate 0.
        let r = dual_rate(&a, &DVector::from_vec(vec![1.5]), &[0.0]).unwrap();
        assert_eq!(r, vec![0.0]);
        // lambda = 0.3, g = -0.5: multiplier decreasing toward zero.
        let r = dual_rate(&a, &DVector::from_vec(vec![1.5]), &[0.3]).unwrap();
        assert_eq!(r, vec![-0.5]);
        // lambda = 0, g = +0.2: violated constraint inflates its multiplier.
        let r = dual_rate(&a, &DVector::from_vec(vec![0.8]), &[0.0]).unwrap();
        assert_relative_eq!(r[0], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn active_set_cases() {
        let s = ring4_scenario();
        let mut state = NetworkState::initial(&s);
        // All multipliers positive: empty set.
        state.multipliers = vec![vec![0.1], vec![0.1], vec![0.1], vec![]];
        assert!(active_set(&s, &state).unwrap().is_empty());

        // Multiplier zero with strictly satisfied constraint joins the set;
        // unconstrained agents contribute nothing.
        state.positions = vec![
            vec2(1.0, 1.0),
            vec2(0.5, 0.5),
            vec2(0.5, 0.5),
            vec2(0.0, 0.0),
        ];
        state.multipliers = vec![vec![0.0], vec![0.0], vec![0.4], vec![]];
        let sigma = active_set(&s, &state).unwrap();
        // g1(1,1) = -1 - 1 + 1 = -1 < 0 and lambda = 0: member.
        assert!(sigma.contains(0, 0));
        assert!(sigma.members().contains(&(1, 0)));
        assert!(!sigma.members().contains(&(2, 0))); // lambda > 0
        assert_eq!(sigma.len(), 2);
    }

    #[test]
    fn bitmask_follows_canonical_order() {
        let s = ring4_scenario();
        let pairs = s.constraint_pairs();
        assert_eq!(pairs, vec![(0, 0), (1, 0), (2, 0)]);
        let sigma: ActiveSet = [(1, 0)].into_iter().collect();
        assert_eq!(sigma.bitmask(&pairs), Some(0b010));
    }

    #[test]
    fn locality_perturbing_non_neighbor_changes_nothing() {
        let s = ring4_scenario();
        let mut state = NetworkState::initial(&s);
        let before = control_input(&s, &state, 0).unwrap();
        // Node 2 is not adjacent to node 0 on the 4-ring.
        state.positions[2] = vec2(100.0, -55.0);
        let after = control_input(&s, &state, 0).unwrap();
        assert_eq!(before, after);
    }

    proptest! {
        /// Dual sign invariant: the projected rate is never negative when the
        /// multiplier is zero, and equals g whenever g > 0 or lambda > 0.
        #[test]
        fn projection_cases_exhaustive(p in -1e6f64..1e6, q in 0f64..1e6) {
            let r = positive_projection(p, q);
            if q == 0.0 {
                prop_assert!(r >= 0.0);
            }
            if p > 0.0 || q > 0.0 {
                prop_assert_eq!(r, p);
            } else {
                prop_assert_eq!(r, 0.0);
            }
        }
    }

    #[test]
    fn stationary_consensus_state_satisfies_kkt() {
        // When every control input and dual rate vanishes at consensus, the
        // state is a KKT point of the centralized problem. Two identical
        // constrained agents sitting at their common constrained optimum
        // x = 1 with lambda = 2 realize the premise exactly.
        let objective = ScalarField::quadratic(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![0.0]),
            0.0,
        )
        .unwrap();
        let halfspace = ScalarField::affine(DVector::from_vec(vec![-1.0]), 1.0).unwrap();
        let agent = crate::problem::AgentSpec {
            objective,
            constraints: vec![halfspace],
            x0: DVector::from_vec(vec![1.0]),
            lambda0: vec![2.0],
        };
        let s = Scenario {
            topology: Topology::path(2).unwrap(),
            agents: vec![agent.clone(), agent],
            alpha: 0.3,
            beta: 4.0,
            dim: 1,
            dt: 1e-2,
            t_final: 1.0,
            method: Method::Euler,
            seed: 0,
        };
        let state = NetworkState::initial(&s);
        for i in 0..2 {
            let u = control_input(&s, &state, i).unwrap();
            assert_eq!(u[0], 0.0);
            let rates =
                dual_rate(&s.agents[i], &state.positions[i], &state.multipliers[i]).unwrap();
            assert_eq!(rates, vec![0.0]);
        }
        let r = crate::oracle::kkt_residuals(&s, &state).unwrap();
        assert!(r.max_optimality() < 1e-12, "{r:?}");
        assert_eq!(r.consensus, 0.0);
    }

    #[test]
    fn fixed_active_set_ordering_is_deterministic() {
        let a: ActiveSet = [(2, 0), (0, 0), (1, 0)].into_iter().collect();
        let listed: Vec<_> = a.members().iter().copied().collect();
        assert_eq!(listed, vec![(0, 0), (1, 0), (2, 0)]);
    }
}
