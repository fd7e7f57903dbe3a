//! Helpers shared by the integration suites.
#![allow(dead_code)] // each test binary uses its own subset

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use seed_swarm::functions::ScalarField;
use seed_swarm::graph::Topology;
use seed_swarm::problem::{AgentSpec, Method, Scenario};
use std::path::PathBuf;

/// Path to the packaged four-agent ring scenario.
pub fn ring4_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/ring4.json")
}

pub fn load_ring4() -> Scenario {
    Scenario::load(ring4_path()).expect("packaged scenario parses")
}

/// Random connected topology on up to `max_nodes` nodes: a spanning tree
/// plus a few extra edges.
pub fn random_connected_topology(rng: &mut ChaCha8Rng, max_nodes: usize) -> Topology {
    let n = rng.random_range(2..=max_nodes);
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        triples.push((u, v, 1.0));
    }
    for _ in 0..rng.random_range(0..=n) {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let key = (i.min(j), i.max(j));
        if i != j && !triples.iter().any(|&(a, b, _)| (a.min(b), a.max(b)) == key) {
            triples.push((i, j, 1.0));
        }
    }
    Topology::new(n, triples).unwrap()
}

/// Random small scenario, feasible by construction: every constraint holds
/// strictly at a shared anchor point and each objective is strictly convex.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.random_range(1..=4);
    let m = rng.random_range(1..=2);
    let anchor = DVector::from_fn(m, |_, _| rng.random_range(-0.5..0.5));
    let total_constraints = rng.random_range(0..=4usize);
    let mut per_agent: Vec<usize> = vec![0; n];
    for _ in 0..total_constraints {
        let i = rng.random_range(0..n);
        per_agent[i] += 1;
    }
    let agents: Vec<AgentSpec> = (0..n)
        .map(|i| {
            let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let q = &a.transpose() * &a + DMatrix::identity(m, m) * 0.3;
            let center = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let objective = ScalarField::quadratic(
                q,
                center,
                DVector::from_fn(m, |_, _| rng.random_range(-0.3..0.3)),
                0.0,
            )
            .unwrap();
            let constraints: Vec<ScalarField> = (0..per_agent[i])
                .map(|_| {
                    if rng.random_bool(0.5) {
                        let center =
                            &anchor + DVector::from_fn(m, |_, _| rng.random_range(-0.4..0.4));
                        let radius = (&anchor - &center).norm() + rng.random_range(0.3..1.2);
                        ScalarField::ball(center, radius).unwrap()
                    } else {
                        let slope = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
                        let b = -slope.dot(&anchor) - rng.random_range(0.2..1.0);
                        ScalarField::affine(slope, b).unwrap()
                    }
                })
                .collect();
            let lambda0 = vec![0.0; constraints.len()];
            AgentSpec {
                objective,
                constraints,
                x0: DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
                lambda0,
            }
        })
        .collect();
    Scenario {
        topology: Topology::path(n).unwrap(),
        agents,
        alpha: 0.1,
        beta: 10.0,
        dim: m,
        dt: 1e-3,
        t_final: 1.0,
        method: Method::Euler,
        seed: 0,
    }
}

/// Every distinct field shape the scenario schema admits, sized for 2-D.
pub fn field_catalog() -> Vec<ScalarField> {
    let ring4 = load_ring4();
    let mut fields: Vec<ScalarField> = Vec::new();
    for a in &ring4.agents {
        fields.push(a.objective.clone());
        fields.extend(a.constraints.iter().cloned());
    }
    fields.push(
        ScalarField::quadratic(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![-1.0, 0.5]),
            DVector::from_vec(vec![0.3, -0.2]),
            1.5,
        )
        .unwrap(),
    );
    fields.push(
        ScalarField::sum(vec![
            ScalarField::ball(DVector::from_vec(vec![0.5, -0.5]), 1.0).unwrap(),
            ScalarField::affine(DVector::from_vec(vec![1.0, 2.0]), -0.5).unwrap(),
        ])
        .unwrap(),
    );
    fields
}
