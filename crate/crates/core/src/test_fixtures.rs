//! Scenarios shared by unit tests across modules.

use crate::functions::ScalarField;
use crate::graph::Topology;
use crate::problem::{AgentSpec, Method, Scenario};
use nalgebra::{DMatrix, DVector};

pub(crate) fn vec2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

pub(crate) fn quad1(center: f64) -> ScalarField {
    ScalarField::quadratic(
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_vec(vec![center]),
        DVector::from_vec(vec![0.0]),
        0.0,
    )
    .unwrap()
}

/// Two unconstrained agents on a path pulling toward 1 and 3; the common
/// minimizer is the midpoint 2.
pub(crate) fn two_agent_line() -> Scenario {
    Scenario {
        topology: Topology::path(2).unwrap(),
        agents: vec![
            AgentSpec {
                objective: quad1(1.0),
                constraints: vec![],
                x0: DVector::from_vec(vec![0.0]),
                lambda0: vec![],
            },
            AgentSpec {
                objective: quad1(3.0),
                constraints: vec![],
                x0: DVector::from_vec(vec![4.0]),
                lambda0: vec![],
            },
        ],
        alpha: 0.1,
        beta: 10.0,
        dim: 1,
        dt: 1e-3,
        t_final: 20.0,
        method: Method::Euler,
        seed: 0,
    }
}

/// Four agents on a ring in 2-D: quadratic objectives, one halfspace and two
/// ball constraints, agent 3 unconstrained. Mirrors scenarios/ring4.json.
pub(crate) fn ring4_scenario() -> Scenario {
    let eye = DMatrix::identity(2, 2);
    let zero2 = vec2(0.0, 0.0);
    let agents = vec![
        AgentSpec {
            objective: ScalarField::quadratic(eye.clone(), zero2.clone(), zero2.clone(), 0.0)
                .unwrap(),
            constraints: vec![ScalarField::affine(vec2(-1.0, -1.0), 1.0).unwrap()],
            x0: vec2(2.0, 3.0),
            lambda0: vec![0.0],
        },
        AgentSpec {
            objective: ScalarField::quadratic(eye.clone(), vec2(4.0, 2.0), zero2.clone(), 0.0)
                .unwrap(),
            constraints: vec![ScalarField::ball(zero2.clone(), 2.0_f64.sqrt()).unwrap()],
            x0: vec2(1.0, 4.0),
            lambda0: vec![0.0],
        },
        AgentSpec {
            objective: ScalarField::quadratic(
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]),
                vec2(3.0, 1.0),
                zero2.clone(),
                0.0,
            )
            .unwrap(),
            constraints: vec![ScalarField::ball(zero2.clone(), 1.0).unwrap()],
            x0: vec2(3.0, 4.0),
            lambda0: vec![0.0],
        },
        AgentSpec {
            objective: ScalarField::quadratic(
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
                vec2(1.0, 0.0),
                zero2,
                0.0,
            )
            .unwrap(),
            constraints: vec![],
            x0: vec2(5.0, 0.0),
            lambda0: vec![],
        },
    ];
    Scenario {
        topology: Topology::ring(4).unwrap(),
        agents,
        alpha: 0.1,
        beta: 10.0,
        dim: 2,
        dt: 1e-3,
        t_final: 20.0,
        method: Method::Euler,
        seed: 0,
    }
}

/// Single unconstrained 1-D agent descending x^2 from x = 1.
pub(crate) fn single_agent_parabola(alpha: f64, dt: f64, t_final: f64, method: Method) -> Scenario {
    Scenario {
        topology: Topology::new(1, []).unwrap(),
        agents: vec![AgentSpec {
            objective: quad1(0.0),
            constraints: vec![],
            x0: DVector::from_vec(vec![1.0]),
            lambda0: vec![],
        }],
        alpha,
        beta: 1.0,
        dim: 1,
        dt,
        t_final,
        method,
        seed: 0,
    }
}
