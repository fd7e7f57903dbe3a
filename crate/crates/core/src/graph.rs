//! Communication topology: undirected weighted graphs with incidence,
//! Laplacian, and spectral views.
//!
//! Nodes are indexed `0..node_count` throughout the API; scenario files use
//! 1-based labels and are converted at the JSON boundary. Edges are kept in
//! canonical form (endpoints ordered low-to-high, sorted, deduplicated), and
//! the incidence orientation is fixed low-index -> high-index so that every
//! derived matrix is reproducible.

use nalgebra::DMatrix;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph needs at least one node")]
    NoNodes,
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({i}, {j}) has an endpoint outside 0..{n}")]
    EndpointOutOfRange { i: usize, j: usize, n: usize },
    #[error("edge ({i}, {j}) weight must be positive, got {weight}")]
    NonPositiveWeight { i: usize, j: usize, weight: f64 },
    #[error("node index {index} outside 0..{n}")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("graph is disconnected, algebraic connectivity is undefined")]
    Disconnected,
    #[error("single-node graph has no spectral gap")]
    SingleNode,
}

/// One undirected edge in canonical form: `a < b`, positive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected weighted communication graph.
///
/// Immutable after construction; all derived matrices are computed on demand
/// from the canonical edge list, so concurrent reads are safe.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    node_count: usize,
    edges: Vec<Edge>,
}

impl Topology {
    /// Builds a canonical topology from `(i, j, weight)` triples.
    ///
    /// Rejects self-loops, duplicate edges (compared unordered), endpoints
    /// outside `0..node_count`, and non-positive weights.
    pub fn new(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::NoNodes);
        }
        let mut canonical: Vec<Edge> = Vec::new();
        for (i, j, weight) in edges {
            if i >= node_count || j >= node_count {
                return Err(GraphError::EndpointOutOfRange {
                    i,
                    j,
                    n: node_count,
                });
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if weight <= 0.0 || weight.is_nan() {
                return Err(GraphError::NonPositiveWeight { i, j, weight });
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if canonical.iter().any(|e| e.a == a && e.b == b) {
                return Err(GraphError::DuplicateEdge(a, b));
            }
            canonical.push(Edge { a, b, weight });
        }
        canonical.sort_by_key(|x| (x.a, x.b));
        Ok(Self {
            node_count,
            edges: canonical,
        })
    }

    /// Ring 0-1-...-(n-1)-0 with unit weights.
    pub fn ring(n: usize) -> Result<Self, GraphError> {
        let edges = (0..n).filter(|_| n > 1).map(|i| (i, (i + 1) % n, 1.0));
        // A 2-ring would duplicate the single edge; collapse it to a path.
        if n == 2 {
            return Self::path(2);
        }
        Self::new(n, edges)
    }

    /// Path 0-1-...-(n-1) with unit weights.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        Self::new(n, (1..n).map(|i| (i - 1, i, 1.0)))
    }

    /// Complete graph with unit weights.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j, 1.0));
            }
        }
        Self::new(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbor set of `node`; symmetric by construction.
    pub fn neighbors(&self, node: usize) -> Result<BTreeSet<usize>, GraphError> {
        self.check_node(node)?;
        Ok(self
            .edges
            .iter()
            .filter_map(|e| {
                if e.a == node {
                    Some(e.b)
                } else if e.b == node {
                    Some(e.a)
                } else {
                    None
                }
            })
            .collect())
    }

    /// Neighbors of `node` with edge weights, sorted by neighbor index.
    pub fn neighbor_weights(&self, node: usize) -> Result<Vec<(usize, f64)>, GraphError> {
        self.check_node(node)?;
        let mut out: Vec<(usize, f64)> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.a == node {
                    Some((e.b, e.weight))
                } else if e.b == node {
                    Some((e.a, e.weight))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by_key(|&(j, _)| j);
        Ok(out)
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for e in &self.edges {
                let v = if e.a == u {
                    e.b
                } else if e.b == u {
                    e.a
                } else {
                    continue;
                };
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.node_count
    }

    /// Incidence matrix with the fixed low-to-high orientation. Each column
    /// carries `-sqrt(w)` at the tail and `+sqrt(w)` at the head, so that
    /// `D * D^T` reproduces the weighted Laplacian.
    pub fn incidence_matrix(&self) -> IncidenceMatrix {
        let mut m = DMatrix::zeros(self.node_count, self.edges.len());
        let mut orientation = Vec::with_capacity(self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            let s = e.weight.sqrt();
            m[(e.a, k)] = -s;
            m[(e.b, k)] = s;
            orientation.push((e.a, e.b));
        }
        IncidenceMatrix {
            matrix: m,
            orientation,
        }
    }

    /// Weighted graph Laplacian (degree minus adjacency).
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.node_count;
        let mut l = DMatrix::zeros(n, n);
        for e in &self.edges {
            l[(e.a, e.a)] += e.weight;
            l[(e.b, e.b)] += e.weight;
            l[(e.a, e.b)] -= e.weight;
            l[(e.b, e.a)] -= e.weight;
        }
        l
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let eig = self.laplacian().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|x, y| x.total_cmp(y));
        vals
    }

    /// Second-smallest Laplacian eigenvalue.
    ///
    /// Errors on disconnected graphs (the eigenvalue would be zero and every
    /// consensus guarantee voids) and on single-node graphs.
    pub fn algebraic_connectivity(&self) -> Result<f64, GraphError> {
        if self.node_count < 2 {
            return Err(GraphError::SingleNode);
        }
        if !self.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(self.laplacian_spectrum()[1])
    }

    fn check_node(&self, node: usize) -> Result<(), GraphError> {
        if node >= self.node_count {
            return Err(GraphError::NodeOutOfRange {
                index: node,
                n: self.node_count,
            });
        }
        Ok(())
    }
}

/// Oriented incidence matrix of a [`Topology`].
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    matrix: DMatrix<f64>,
    orientation: Vec<(usize, usize)>,
}

impl IncidenceMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Per-edge `(tail, head)` orientation.
    pub fn orientation(&self) -> &[(usize, usize)] {
        &self.orientation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ring4_builds_canonical() {
        let t = Topology::new(4, [(3, 0, 1.0), (1, 0, 1.0), (2, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let pairs: Vec<(usize, usize)> = t.edges().iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
        assert_eq!(t, Topology::ring(4).unwrap());
    }

    #[test]
    fn single_node_no_edges() {
        let t = Topology::new(1, []).unwrap();
        assert_eq!(t.node_count(), 1);
        assert!(t.edges().is_empty());
        assert!(t.is_connected());
    }

    #[test]
    fn rejects_duplicate_edge() {
        let err = Topology::new(3, [(0, 1, 1.0), (0, 1, 1.0)]).unwrap_err();
        assert_eq!(err, GraphError::DuplicateEdge(0, 1));
        // Also when flipped: (1,0) duplicates (0,1) under unordered comparison.
        let err = Topology::new(3, [(0, 1, 1.0), (1, 0, 2.0)]).unwrap_err();
        assert_eq!(err, GraphError::DuplicateEdge(0, 1));
    }

    #[test]
    fn rejects_self_loop_and_bad_inputs() {
        assert_eq!(
            Topology::new(3, [(1, 1, 1.0)]).unwrap_err(),
            GraphError::SelfLoop(1)
        );
        assert!(matches!(
            Topology::new(2, [(0, 2, 1.0)]).unwrap_err(),
            GraphError::EndpointOutOfRange { .. }
        ));
        assert!(matches!(
            Topology::new(2, [(0, 1, 0.0)]).unwrap_err(),
            GraphError::NonPositiveWeight { .. }
        ));
        assert_eq!(Topology::new(0, []).unwrap_err(), GraphError::NoNodes);
    }

    #[test]
    fn path2_incidence_column() {
        let t = Topology::path(2).unwrap();
        let d = t.incidence_matrix();
        assert_eq!(d.matrix().nrows(), 2);
        assert_eq!(d.matrix().ncols(), 1);
        assert_eq!(d.matrix()[(0, 0)], -1.0);
        assert_eq!(d.matrix()[(1, 0)], 1.0);
        assert_eq!(d.orientation(), &[(0, 1)]);
    }

    #[test]
    fn edgeless_graph_zero_laplacian() {
        let t = Topology::new(3, []).unwrap();
        let d = t.incidence_matrix();
        assert_eq!(d.matrix().ncols(), 0);
        assert_eq!(t.laplacian(), DMatrix::zeros(3, 3));
        assert!(!t.is_connected());
        assert!(t.neighbors(0).unwrap().is_empty());
    }

    #[test]
    fn ring4_incidence_product_is_laplacian() {
        let t = Topology::ring(4).unwrap();
        let d = t.incidence_matrix();
        let product = d.matrix() * d.matrix().transpose();
        // Direct matrix multiply against the expected ring Laplacian.
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, -1.0, 0.0, -1.0, //
                -1.0, 2.0, -1.0, 0.0, //
                0.0, -1.0, 2.0, -1.0, //
                -1.0, 0.0, -1.0, 2.0,
            ],
        );
        assert_relative_eq!(product, expected, epsilon = 1e-12);
        assert_relative_eq!(t.laplacian(), expected, epsilon = 1e-12);
    }

    #[test]
    fn algebraic_connectivity_reference_values() {
        assert_relative_eq!(
            Topology::path(2).unwrap().algebraic_connectivity().unwrap(),
            2.0
        );
        // Eigen-decomposition of the 4-ring Laplacian: spectrum {0, 2, 2, 4}.
        let ring = Topology::ring(4).unwrap();
        assert_relative_eq!(ring.algebraic_connectivity().unwrap(), 2.0, epsilon = 1e-10);
        let spectrum = ring.laplacian_spectrum();
        let expected = [0.0, 2.0, 2.0, 4.0];
        for (got, want) in spectrum.iter().zip(expected) {
            assert_relative_eq!(*got, want, epsilon = 1e-10);
        }
        // Complete graph on 3 nodes: spectrum {0, 3, 3}.
        assert_relative_eq!(
            Topology::complete(3)
                .unwrap()
                .algebraic_connectivity()
                .unwrap(),
            3.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn disconnected_connectivity_is_error() {
        let t = Topology::new(2, []).unwrap();
        assert!(!t.is_connected());
        assert_eq!(
            t.algebraic_connectivity().unwrap_err(),
            GraphError::Disconnected
        );
    }

    #[test]
    fn neighbors_ring4() {
        let t = Topology::ring(4).unwrap();
        let n0: Vec<usize> = t.neighbors(0).unwrap().into_iter().collect();
        assert_eq!(n0, vec![1, 3]);
        let n2: Vec<usize> = t.neighbors(2).unwrap().into_iter().collect();
        assert_eq!(n2, vec![1, 3]);
        assert!(matches!(
            t.neighbors(4),
            Err(GraphError::NodeOutOfRange { .. })
        ));
        // Symmetry: j in N(i) iff i in N(j).
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(
                    t.neighbors(i).unwrap().contains(&j),
                    t.neighbors(j).unwrap().contains(&i)
                );
            }
        }
    }

    fn random_connected(rng: &mut ChaCha8Rng) -> Topology {
        let n = rng.random_range(2..=8);
        // Random spanning tree plus extra random edges keeps it connected.
        let mut triples: Vec<(usize, usize, f64)> = Vec::new();
        for v in 1..n {
            let u = rng.random_range(0..v);
            triples.push((u, v, rng.random_range(0.2..3.0)));
        }
        for _ in 0..rng.random_range(0..=n) {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j
                && !triples
                    .iter()
                    .any(|&(a, b, _)| (a.min(b), a.max(b)) == (i.min(j), i.max(j)))
            {
                triples.push((i, j, rng.random_range(0.2..3.0)));
            }
        }
        Topology::new(n, triples).unwrap()
    }

    #[test]
    fn incidence_product_is_orientation_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let t = random_connected(&mut rng);
            let d = t.incidence_matrix().matrix().clone();
            let reference = &d * d.transpose();
            // Flip a random subset of column signs: any re-orientation of the
            // edges leaves D * D^T unchanged.
            let mut flipped = d.clone();
            for c in 0..flipped.ncols() {
                if rng.random_bool(0.5) {
                    for r in 0..flipped.nrows() {
                        flipped[(r, c)] = -flipped[(r, c)];
                    }
                }
            }
            let product = &flipped * flipped.transpose();
            assert_eq!(product, reference);
            assert_relative_eq!(reference, t.laplacian(), epsilon = 1e-12);
        }
    }

    #[test]
    fn laplacian_rows_sum_to_zero_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let t = random_connected(&mut rng);
            let l = t.laplacian();
            for r in 0..l.nrows() {
                assert_relative_eq!(l.row(r).sum(), 0.0, epsilon = 1e-12);
            }
            assert_relative_eq!(l.clone(), l.transpose(), epsilon = 1e-15);
            let min_eig = t.laplacian_spectrum()[0];
            assert!(min_eig > -1e-10, "laplacian not PSD: min eig {min_eig}");
        }
    }

    proptest::proptest! {
        /// Canonicalization is invariant under edge order and endpoint
        /// orientation of the input.
        #[test]
        fn canonical_form_ignores_input_order(
            n in 2usize..8,
            mask in proptest::collection::vec(proptest::bool::ANY, 28),
            weights in proptest::collection::vec(0.1f64..5.0, 28),
            seed in proptest::num::u64::ANY,
        ) {
            let mut edges = Vec::new();
            let mut slot = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    if mask[slot] {
                        edges.push((i, j, weights[slot]));
                    }
                    slot += 1;
                }
            }
            proptest::prop_assume!(!edges.is_empty());
            let reference = Topology::new(n, edges.clone()).unwrap();

            let mut variant: Vec<(usize, usize, f64)> = edges
                .iter()
                .enumerate()
                .map(|(k, &(i, j, w))| {
                    if (seed >> (k % 60)) & 1 == 1 { (j, i, w) } else { (i, j, w) }
                })
                .collect();
            let rotation = seed as usize % variant.len();
            variant.rotate_left(rotation);
            if seed % 3 == 0 {
                variant.reverse();
            }
            proptest::prop_assert_eq!(Topology::new(n, variant).unwrap(), reference);
        }
    }

    #[test]
    fn courant_fischer_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let t = random_connected(&mut rng);
            let n = t.node_count();
            let l = t.laplacian();
            let v2 = t.algebraic_connectivity().unwrap();
            for _ in 0..10 {
                let mut x = nalgebra::DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let mean = x.mean();
                x.add_scalar_mut(-mean); // project onto 1^T x = 0
                let norm2 = x.dot(&x);
                if norm2 < 1e-12 {
                    continue;
                }
                let rayleigh = x.dot(&(&l * &x)) / norm2;
                assert!(
                    rayleigh >= v2 - 1e-9,
                    "Rayleigh quotient {rayleigh} below v2 {v2}"
                );
            }
        }
    }
}
