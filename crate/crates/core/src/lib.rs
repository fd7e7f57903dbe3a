//! Simulator and verification harness for distributed constrained
//! optimal consensus over networks of single-integrator agents.
//!
//! A group of agents, each knowing only its own convex objective, its own
//! inequality constraints, and the relative positions of its neighbors,
//! runs a primal-dual flow
//!
//! ```text
//! xdot_i = -alpha * grad_x L_i(x_i, lambda_i) + h_i,
//! ldot_i = [g_i(x_i)]^+_{lambda_i},          h_i = -beta * sum_j w_ij (x_i - x_j),
//! ```
//!
//! where `L_i = f_i + lambda_i^T g_i` is the node Lagrangian and the positive
//! projection `[p]_q^+` keeps multipliers non-negative. The crate integrates
//! this hybrid flow, solves the centralized problem with an independent KKT
//! oracle, and checks every runtime-verifiable certificate of the analysis:
//! boundedness and hybrid Lyapunov monotonicity, the consensus-error ultimate
//! bound, and terminal KKT residuals.
//!
//! Module map:
//! - [`graph`] — communication topology, incidence matrix, Laplacian spectrum;
//! - [`functions`] — the convex scalar-field catalog with exact derivatives;
//! - [`problem`] — scenario data model, JSON schema, validation;
//! - [`protocol`] — per-agent control inputs and projected dual rates;
//! - [`integrator`] — fixed-step Euler/RK4 integration of the hybrid flow;
//! - [`oracle`] — centralized KKT solver (active-set enumeration) and a grid
//!   refinement cross-check;
//! - [`diagnostics`] — Lyapunov/consensus certificate series and reports;
//! - [`cli`] — the `seed-swarm` command-line surface.

pub mod cli;
pub mod diagnostics;
pub mod functions;
pub mod graph;
pub mod integrator;
pub mod oracle;
pub mod problem;
pub mod protocol;

#[cfg(test)]
pub(crate) mod test_fixtures;

pub use functions::{FieldError, ScalarField};
pub use graph::{GraphError, IncidenceMatrix, Topology};
pub use integrator::{simulate, SimError, Trajectory};
pub use oracle::{solve_grid, solve_kkt, KktResiduals, KktSolution, OracleError};
pub use problem::{AgentSpec, Method, Scenario, ScenarioError, ValidationReport};
pub use protocol::{ActiveSet, NetworkState};
