//! Checks over the packaged scenario corpus.

mod common;

use seed_swarm::problem::{Method, Scenario};
use std::path::PathBuf;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn every_packaged_scenario_validates_and_round_trips() {
    let mut seen = 0;
    for entry in std::fs::read_dir(corpus_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().map(|e| e != "json").unwrap_or(true) {
            continue;
        }
        let s = Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        s.validate()
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));

        // save . load is the identity on the canonical form.
        let canonical = s.canonical_json();
        let reloaded = Scenario::from_json(&canonical).unwrap();
        assert_eq!(s, reloaded, "{}", path.display());
        assert_eq!(reloaded.canonical_json(), canonical, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 2, "expected a scenario corpus, found {seen} files");
}

#[test]
fn packaged_ring_scenario_reference_values() {
    let s = common::load_ring4();
    assert_eq!(s.topology.node_count(), 4);
    assert_eq!(s.topology.edges().len(), 4);
    assert_eq!(s.agents.len(), 4);
    assert_eq!(s.dim, 2);
    assert_eq!(s.alpha, 0.1);
    assert_eq!(s.beta, 10.0);
    assert_eq!(s.dt, 1e-3);
    assert_eq!(s.t_final, 20.0);
    assert_eq!(s.method, Method::Euler);
    assert_eq!(s.constraint_pairs(), vec![(0, 0), (1, 0), (2, 0)]);

    let report = s.validate().unwrap();
    // A strictly feasible point exists, e.g. (0.8, 0.5) satisfies all three
    // constraints strictly.
    let p = report.slater_point.expect("interior point found");
    let point = nalgebra::DVector::from_vec(p);
    for agent in &s.agents {
        for g in &agent.constraints {
            assert!(g.eval(&point).unwrap() < 0.0);
        }
    }
}
