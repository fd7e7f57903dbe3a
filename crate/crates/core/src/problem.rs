//! Scenario data model: agents, constraints, gains, integration settings.
//!
//! A scenario file is a single JSON object with top-level keys
//! `nodes / edges / agents / alpha / beta / dim / dt / t_final / method / seed`.
//! Node indices are 1-based in the file and 0-based in the API. `save`
//! always emits the canonical form (sorted edges, explicit weights, explicit
//! `lambda0`), so `load(save(s)) == s` bit-for-bit.

use crate::functions::{FieldError, ScalarField};
use crate::graph::{GraphError, Topology};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("scenario has {agents} agents but the topology has {nodes} nodes")]
    AgentCountMismatch { agents: usize, nodes: usize },
    #[error("agent {agent}: {what} has dimension {got}, scenario dim is {expected}")]
    AgentDimension {
        agent: usize,
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("agent {agent}: lambda0 has {got} entries for {expected} constraints")]
    MultiplierCount {
        agent: usize,
        expected: usize,
        got: usize,
    },
    #[error("agent {agent}: lambda0[{index}] = {value} is negative")]
    NegativeMultiplier {
        agent: usize,
        index: usize,
        value: f64,
    },
    #[error("gain {name} must be positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("time step dt must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("horizon t_final must be non-negative, got {0}")]
    NegativeHorizon(f64),
    #[error("communication graph is disconnected")]
    Disconnected,
}

/// Integration method for the hybrid flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
}

/// One agent: local objective `f_i`, local inequality constraints `g_ik <= 0`,
/// initial position, and initial multipliers (one per constraint, all >= 0).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub objective: ScalarField,
    pub constraints: Vec<ScalarField>,
    pub x0: DVector<f64>,
    pub lambda0: Vec<f64>,
}

/// Full experiment description. Immutable once loaded; simulations and
/// sweeps may share one instance across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile", into = "ScenarioFile")]
pub struct Scenario {
    pub topology: Topology,
    pub agents: Vec<AgentSpec>,
    pub alpha: f64,
    pub beta: f64,
    pub dim: usize,
    pub dt: f64,
    pub t_final: f64,
    pub method: Method,
    /// Reserved for randomized tooling; the simulation pipeline itself is
    /// deterministic and never draws from it.
    pub seed: u64,
}

impl Scenario {
    /// Structural and semantic validation.
    ///
    /// Hard errors: mismatched agent/node counts, dimension mismatches,
    /// non-positive gains or step size, negative horizon or multipliers,
    /// disconnected graph. Soft findings (report entries, not errors): no
    /// strictly feasible point found, aggregate objective not strictly
    /// convex in some direction, non-unit edge weights.
    pub fn validate(&self) -> Result<ValidationReport, ScenarioError> {
        if self.agents.len() != self.topology.node_count() {
            return Err(ScenarioError::AgentCountMismatch {
                agents: self.agents.len(),
                nodes: self.topology.node_count(),
            });
        }
        if self.alpha <= 0.0 || self.alpha.is_nan() {
            return Err(ScenarioError::NonPositiveGain {
                name: "alpha",
                value: self.alpha,
            });
        }
        if self.beta <= 0.0 || self.beta.is_nan() {
            return Err(ScenarioError::NonPositiveGain {
                name: "beta",
                value: self.beta,
            });
        }
        if self.dt <= 0.0 || self.dt.is_nan() {
            return Err(ScenarioError::NonPositiveStep(self.dt));
        }
        if self.t_final < 0.0 {
            return Err(ScenarioError::NegativeHorizon(self.t_final));
        }
        for (i, agent) in self.agents.iter().enumerate() {
            let check = |what: &str, got: usize| -> Result<(), ScenarioError> {
                if got != self.dim {
                    return Err(ScenarioError::AgentDimension {
                        agent: i,
                        what: what.to_string(),
                        expected: self.dim,
                        got,
                    });
                }
                Ok(())
            };
            check("objective", agent.objective.dim())?;
            check("x0", agent.x0.len())?;
            for (k, g) in agent.constraints.iter().enumerate() {
                check(&format!("constraint {k}"), g.dim())?;
            }
            if agent.lambda0.len() != agent.constraints.len() {
                return Err(ScenarioError::MultiplierCount {
                    agent: i,
                    expected: agent.constraints.len(),
                    got: agent.lambda0.len(),
                });
            }
            for (k, &l) in agent.lambda0.iter().enumerate() {
                if l < 0.0 {
                    return Err(ScenarioError::NegativeMultiplier {
                        agent: i,
                        index: k,
                        value: l,
                    });
                }
            }
            // PSD of quadratics is enforced at construction; re-certify here
            // so validate() is a complete gate on its own.
            let x = DVector::zeros(self.dim);
            agent.objective.hess(&x)?;
        }
        if !self.topology.is_connected() {
            return Err(ScenarioError::Disconnected);
        }

        let mut report = ValidationReport::default();

        let slater = find_strictly_feasible(self);
        match &slater {
            Some(p) => {
                report.slater_point = Some(p.iter().copied().collect());
            }
            None if self.constraint_count() > 0 => {
                report.warnings.push(
                    "no strictly feasible point found; Slater's condition is inconclusive"
                        .to_string(),
                );
            }
            None => {
                // No constraints at all: strict feasibility is vacuous.
                report.slater_point = Some(mean_initial_position(self).iter().copied().collect());
            }
        }

        // Strict convexity of the aggregate objective in every direction is
        // what makes the common minimizer unique; a flat direction is only a
        // warning because the standing assumption is on the sum.
        let zero = DVector::zeros(self.dim);
        let mut aggregate = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for agent in &self.agents {
            aggregate += agent.objective.hess(&zero)?;
        }
        let mut eigs: Vec<f64> = aggregate
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eigs.sort_by(|a, b| a.total_cmp(b));
        report.aggregate_strictly_convex = eigs[0] > 1e-10;
        if !report.aggregate_strictly_convex {
            report.warnings.push(format!(
                "aggregate objective Hessian has a flat direction (min eigenvalue {:.3e}); \
                 the common minimizer may not be unique",
                eigs[0]
            ));
        }

        if self.topology.edges().iter().any(|e| e.weight != 1.0) {
            report.weighted_extension = true;
            report.warnings.push(
                "non-unit edge weights are an extension beyond the analyzed protocol; \
                 they scale the consensus term per edge"
                    .to_string(),
            );
        }
        Ok(report)
    }

    pub fn constraint_count(&self) -> usize {
        self.agents.iter().map(|a| a.constraints.len()).sum()
    }

    /// Flat list of `(agent, constraint)` pairs in canonical order.
    pub fn constraint_pairs(&self) -> Vec<(usize, usize)> {
        self.agents
            .iter()
            .enumerate()
            .flat_map(|(i, a)| (0..a.constraints.len()).map(move |k| (i, k)))
            .collect()
    }

    /// Canonical pretty-printed JSON with a trailing newline.
    pub fn canonical_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scenario serializes");
        text.push('\n');
        text
    }

    /// SHA-256 of the canonical JSON, hex-encoded.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        std::fs::write(path, self.canonical_json()).map_err(|source| ScenarioError::Write {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Parses a scenario from JSON text; errors carry line/column context.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }
}

pub fn mean_initial_position(s: &Scenario) -> DVector<f64> {
    let mut mean = DVector::zeros(s.dim);
    for a in &s.agents {
        mean += &a.x0;
    }
    mean / s.agents.len() as f64
}

/// Result of [`Scenario::validate`]: per-finding warnings plus the evidence
/// gathered along the way.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub warnings: Vec<String>,
    /// A point with every constraint strictly negative, when one was found.
    pub slater_point: Option<Vec<f64>>,
    pub aggregate_strictly_convex: bool,
    pub weighted_extension: bool,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.slater_point {
            Some(p) => writeln!(f, "strictly feasible point: {p:?}")?,
            None => writeln!(f, "strictly feasible point: not found")?,
        }
        writeln!(
            f,
            "aggregate strictly convex: {}",
            self.aggregate_strictly_convex
        )?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Searches for a strictly feasible point by minimizing the squared hinge
/// penalty `sum_k max(g_k(x) + margin, 0)^2` with gradient descent and
/// backtracking, from a handful of deterministic starts. A returned point is
/// a certificate (all constraints strictly negative, re-checked by direct
/// evaluation); `None` is inconclusive.
pub fn find_strictly_feasible(s: &Scenario) -> Option<DVector<f64>> {
    let constraints: Vec<&ScalarField> =
        s.agents.iter().flat_map(|a| a.constraints.iter()).collect();
    if constraints.is_empty() {
        return None;
    }
    let strictly_feasible = |x: &DVector<f64>| {
        constraints
            .iter()
            .all(|g| g.eval(x).map(|v| v < 0.0).unwrap_or(false))
    };

    let mut starts = vec![mean_initial_position(s), DVector::zeros(s.dim)];
    starts.extend(s.agents.iter().map(|a| a.x0.clone()));

    for margin in [1e-2, 1e-4, 1e-8] {
        let penalty = |x: &DVector<f64>| -> f64 {
            constraints
                .iter()
                .map(|g| {
                    let v = g.eval(x).unwrap_or(f64::INFINITY) + margin;
                    if v > 0.0 {
                        v * v
                    } else {
                        0.0
                    }
                })
                .sum()
        };
        let penalty_grad = |x: &DVector<f64>| -> DVector<f64> {
            let mut grad = DVector::zeros(s.dim);
            for g in &constraints {
                let v = g.eval(x).unwrap_or(f64::INFINITY) + margin;
                if v > 0.0 {
                    grad += g.grad(x).expect("dims validated") * (2.0 * v);
                }
            }
            grad
        };
        for start in &starts {
            let mut x = start.clone();
            for _ in 0..400 {
                let p = penalty(&x);
                if p == 0.0 {
                    break;
                }
                let grad = penalty_grad(&x);
                let gnorm2 = grad.dot(&grad);
                if gnorm2 < 1e-30 {
                    break;
                }
                let mut step = 1.0;
                let mut accepted = false;
                for _ in 0..40 {
                    let trial = &x - &grad * step;
                    if penalty(&trial) < p {
                        x = trial;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            if strictly_feasible(&x) {
                return Some(x);
            }
        }
    }
    None
}

// --- serialized form -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    nodes: usize,
    edges: Vec<EdgeRepr>,
    agents: Vec<AgentRepr>,
    alpha: f64,
    beta: f64,
    dim: usize,
    dt: f64,
    t_final: f64,
    method: Method,
    #[serde(default)]
    seed: u64,
}

/// `[i, j, w]` with 1-based endpoints; the weight defaults to 1.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum EdgeRepr {
    Weighted(usize, usize, f64),
    Unweighted(usize, usize),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentRepr {
    objective: ScalarField,
    #[serde(default)]
    constraints: Vec<ScalarField>,
    x0: Vec<f64>,
    #[serde(default)]
    lambda0: Option<Vec<f64>>,
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = ScenarioError;

    fn try_from(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let to_zero_based = |v: usize| -> Result<usize, GraphError> {
            // 1-based in the file; 0 is out of range by construction.
            v.checked_sub(1).ok_or(GraphError::EndpointOutOfRange {
                i: 0,
                j: 0,
                n: file.nodes,
            })
        };
        let mut triples = Vec::with_capacity(file.edges.len());
        for e in &file.edges {
            let (i, j, w) = match *e {
                EdgeRepr::Weighted(i, j, w) => (i, j, w),
                EdgeRepr::Unweighted(i, j) => (i, j, 1.0),
            };
            triples.push((to_zero_based(i)?, to_zero_based(j)?, w));
        }
        let topology = Topology::new(file.nodes, triples)?;
        let agents = file
            .agents
            .into_iter()
            .map(|a| {
                let lambda0 = a.lambda0.unwrap_or_else(|| vec![0.0; a.constraints.len()]);
                AgentSpec {
                    objective: a.objective,
                    constraints: a.constraints,
                    x0: DVector::from_vec(a.x0),
                    lambda0,
                }
            })
            .collect();
        Ok(Scenario {
            topology,
            agents,
            alpha: file.alpha,
            beta: file.beta,
            dim: file.dim,
            dt: file.dt,
            t_final: file.t_final,
            method: file.method,
            seed: file.seed,
        })
    }
}

impl From<Scenario> for ScenarioFile {
    fn from(s: Scenario) -> Self {
        ScenarioFile {
            nodes: s.topology.node_count(),
            edges: s
                .topology
                .edges()
                .iter()
                .map(|e| EdgeRepr::Weighted(e.a + 1, e.b + 1, e.weight))
                .collect(),
            agents: s
                .agents
                .into_iter()
                .map(|a| AgentRepr {
                    objective: a.objective,
                    x0: a.x0.iter().copied().collect(),
                    lambda0: Some(a.lambda0),
                    constraints: a.constraints,
                })
                .collect(),
            alpha: s.alpha,
            beta: s.beta,
            dim: s.dim,
            dt: s.dt,
            t_final: s.t_final,
            method: s.method,
            seed: s.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::two_agent_line;

    #[test]
    fn round_trip_is_identity_on_canonical_form() {
        let s = two_agent_line();
        let text = s.canonical_json();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(s, back);
        assert_eq!(back.canonical_json(), text);
        assert_eq!(s.content_hash(), back.content_hash());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        let s = two_agent_line();
        s.save(&path).unwrap();
        let loaded = Scenario::load(&path).unwrap();
        assert_eq!(s, loaded);
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        let err = Scenario::from_json("").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
    }

    #[test]
    fn unknown_field_kind_is_named() {
        let text = r#"{
            "nodes": 1, "edges": [],
            "agents": [{"objective": {"kind": "wavelet"}, "x0": [0.0]}],
            "alpha": 0.1, "beta": 10.0, "dim": 1, "dt": 0.001,
            "t_final": 1.0, "method": "euler"
        }"#;
        let err = Scenario::from_json(text).unwrap_err().to_string();
        assert!(err.contains("wavelet"), "error should name the kind: {err}");
    }

    #[test]
    fn unweighted_edges_default_to_one() {
        let text = r#"{
            "nodes": 2, "edges": [[1, 2]],
            "agents": [
                {"objective": {"kind":"affine","a":[1.0],"b":0.0}, "x0": [0.0]},
                {"objective": {"kind":"affine","a":[1.0],"b":0.0}, "x0": [0.0]}
            ],
            "alpha": 0.1, "beta": 1.0, "dim": 1, "dt": 0.01,
            "t_final": 1.0, "method": "rk4"
        }"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.topology.edges()[0].weight, 1.0);
        assert_eq!(s.method, Method::Rk4);
    }

    #[test]
    fn validate_accepts_and_reports() {
        let s = two_agent_line();
        let report = s.validate().unwrap();
        assert!(report.aggregate_strictly_convex);
        assert!(!report.weighted_extension);
        // No constraints: strict feasibility is vacuous.
        assert!(report.slater_point.is_some());
    }

    #[test]
    fn validate_rejects_bad_gains_and_times() {
        let mut s = two_agent_line();
        s.beta = -1.0;
        assert!(matches!(
            s.validate().unwrap_err(),
            ScenarioError::NonPositiveGain { name: "beta", .. }
        ));
        let mut s = two_agent_line();
        s.alpha = 0.0;
        assert!(matches!(
            s.validate().unwrap_err(),
            ScenarioError::NonPositiveGain { name: "alpha", .. }
        ));
        let mut s = two_agent_line();
        s.dt = 0.0;
        assert!(matches!(
            s.validate().unwrap_err(),
            ScenarioError::NonPositiveStep(_)
        ));
        let mut s = two_agent_line();
        s.t_final = -1.0;
        assert!(matches!(
            s.validate().unwrap_err(),
            ScenarioError::NegativeHorizon(_)
        ));
    }

    #[test]
    fn validate_rejects_disconnected_graph() {
        let mut s = two_agent_line();
        s.topology = Topology::new(2, []).unwrap();
        assert!(matches!(
            s.validate().unwrap_err(),
            ScenarioError::Disconnected
        ));
    }

    #[test]
    fn validate_rejects_negative_lambda0_and_dim_mismatch() {
        let mut s = two_agent_line();
        s.agents[0].constraints =
            vec![ScalarField::affine(DVector::from_vec(vec![-1.0]), 0.0).unwrap()];
        s.agents[0].lambda0 = vec![-0.5];
        assert!(matches!(
            s.validate().unwrap_err(),
            ScenarioError::NegativeMultiplier {
                agent: 0,
                index: 0,
                ..
            }
        ));

        let mut s = two_agent_line();
        s.agents[1].x0 = DVector::from_vec(vec![0.0, 0.0]);
        assert!(matches!(
            s.validate().unwrap_err(),
            ScenarioError::AgentDimension { .. }
        ));
    }

    #[test]
    fn strictly_feasible_point_is_certified() {
        // One agent constrained to the unit ball shifted so 0 is infeasible.
        let mut s = two_agent_line();
        s.agents[0].constraints =
            vec![ScalarField::ball(DVector::from_vec(vec![5.0]), 1.0).unwrap()];
        s.agents[0].lambda0 = vec![0.0];
        let report = s.validate().unwrap();
        let p = DVector::from_vec(report.slater_point.expect("finds interior point"));
        for g in &s.agents[0].constraints {
            assert!(g.eval(&p).unwrap() < 0.0);
        }
    }

    #[test]
    fn infeasible_constraints_yield_warning_not_error() {
        let mut s = two_agent_line();
        // x <= -1 and x >= 1 cannot hold together.
        s.agents[0].constraints = vec![
            ScalarField::affine(DVector::from_vec(vec![1.0]), 1.0).unwrap(),
            ScalarField::affine(DVector::from_vec(vec![-1.0]), 1.0).unwrap(),
        ];
        s.agents[0].lambda0 = vec![0.0, 0.0];
        let report = s.validate().unwrap();
        assert!(report.slater_point.is_none());
        assert!(report.warnings.iter().any(|w| w.contains("Slater")));
    }
}
