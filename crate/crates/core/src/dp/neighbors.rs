//! Neighbouring-graph relations and L1 sensitivity of the adjacency query.
//!
//! Sensitivities are reported on the strict upper triangle: an undirected
//! edge counts once.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::DpError;
use crate::graph::{Adjacency, Graph, NodeId};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeighborRelation {
    /// Graphs differing in exactly one edge.
    EdgeLevel,
    /// One graph is the other with a single node and all its edges removed.
    NodeLevel,
    /// One graph is the other plus a single node carrying exactly one edge.
    OneNodeOneEdge,
}

impl NeighborRelation {
    pub const ALL: [NeighborRelation; 3] = [
        NeighborRelation::EdgeLevel,
        NeighborRelation::NodeLevel,
        NeighborRelation::OneNodeOneEdge,
    ];
}

/// Number of distinct neighbours [`neighbor_pair_at`] can produce.
pub fn neighbor_count(relation: NeighborRelation, g: &Graph) -> usize {
    match relation {
        NeighborRelation::EdgeLevel => g.num_edges(),
        NeighborRelation::NodeLevel | NeighborRelation::OneNodeOneEdge => g.num_nodes(),
    }
}

/// The `choice`-th neighbour of `g`: remove the `choice`-th edge (row-major),
/// remove node `choice`, or attach a new node to node `choice`.
pub fn neighbor_pair_at(
    relation: NeighborRelation,
    g: &Graph,
    choice: usize,
) -> Result<(Graph, Graph), DpError> {
    let count = neighbor_count(relation, g);
    if count == 0 {
        return Err(DpError::NoNeighbor(relation));
    }
    if choice >= count {
        return Err(DpError::Choice { choice, count });
    }
    let other = match relation {
        NeighborRelation::EdgeLevel => {
            let adj = g.adjacency();
            let removed = adj.edges().nth(choice).expect("choice < edge count");
            let kept = adj.edges().filter(|&e| e != removed);
            g.with_adjacency(Adjacency::from_edges(g.num_nodes(), kept)?)?
        }
        NeighborRelation::NodeLevel => without_node(g, choice),
        NeighborRelation::OneNodeOneEdge => {
            let zeros = vec![0.0; g.feature_dim()];
            g.inject_node(&zeros, NodeId(choice))?.0
        }
    };
    Ok((g.clone(), other))
}

/// A uniformly chosen neighbour of `g` under `relation`.
pub fn neighbor_pair_generate(
    relation: NeighborRelation,
    g: &Graph,
    rng: &mut Rng,
) -> Result<(Graph, Graph), DpError> {
    let count = neighbor_count(relation, g);
    if count == 0 {
        return Err(DpError::NoNeighbor(relation));
    }
    neighbor_pair_at(relation, g, rng.random_range(0..count))
}

fn without_node(g: &Graph, k: usize) -> Graph {
    let shift = |i: usize| if i > k { i - 1 } else { i };
    let edges = g
        .adjacency()
        .edges()
        .filter(|&(u, v)| u != k && v != k)
        .map(|(u, v)| (shift(u), shift(v)));
    let n = g.num_nodes() - 1;
    let adj = Adjacency::from_edges(n, edges).expect("shifted edges are valid");
    let keep: Vec<usize> = (0..g.num_nodes()).filter(|&i| i != k).collect();
    let x = g.features().select_rows(&keep);
    let labels = g.labels().map(|l| keep.iter().map(|&i| l[i]).collect());
    Graph::new(adj, x, labels, g.num_classes()).expect("subset of a valid graph")
}

/// `larger` with node `k` removed, as an adjacency over the remaining nodes
/// in their original order.
fn adjacency_without(larger: &Adjacency, k: usize) -> Adjacency {
    let shift = |i: usize| if i > k { i - 1 } else { i };
    let edges = larger
        .edges()
        .filter(|&(u, v)| u != k && v != k)
        .map(|(u, v)| (shift(u), shift(v)));
    Adjacency::from_edges(larger.num_nodes() - 1, edges).expect("valid")
}

/// `smaller` with an isolated node inserted at position `k`, i.e. the
/// zero-row/zero-column padding aligned with the extra node of the larger
/// graph.
fn padded_at(smaller: &Adjacency, k: usize) -> Adjacency {
    let n = smaller.num_nodes();
    // Old node i goes to i (< k) or i + 1; the appended node n goes to k.
    let perm: Vec<usize> = (0..=n)
        .map(|i| match i {
            i if i == n => k,
            i if i < k => i,
            i => i + 1,
        })
        .collect();
    smaller.padded(1).permuted(&perm)
}

/// `‖Ā − A′‖₁` on the strict upper triangle for a neighbouring pair, where
/// `Ā` is the smaller adjacency zero-padded at the position of the extra
/// node. Errors if the pair does not satisfy `relation`.
pub fn global_sensitivity_l1(
    relation: NeighborRelation,
    pair: (&Graph, &Graph),
) -> Result<f64, DpError> {
    let (a, b) = (pair.0.adjacency(), pair.1.adjacency());
    match relation {
        NeighborRelation::EdgeLevel => {
            if a.num_nodes() != b.num_nodes() {
                return Err(DpError::InvalidPair(relation, "node counts differ".into()));
            }
            let diff = a.upper_triangle_l1(b);
            if diff != 1 {
                return Err(DpError::InvalidPair(
                    relation,
                    format!("{diff} differing edges"),
                ));
            }
            Ok(diff as f64)
        }
        NeighborRelation::NodeLevel | NeighborRelation::OneNodeOneEdge => {
            let (large, small) = if a.num_nodes() > b.num_nodes() { (a, b) } else { (b, a) };
            if large.num_nodes() != small.num_nodes() + 1 {
                return Err(DpError::InvalidPair(
                    relation,
                    "node counts must differ by exactly one".into(),
                ));
            }
            // Prefer the last position, the conventional slot for an added node.
            let k = (0..large.num_nodes())
                .rev()
                .filter(|&k| {
                    relation == NeighborRelation::NodeLevel || large.degree(k) == 1
                })
                .find(|&k| adjacency_without(large, k) == *small)
                .ok_or_else(|| {
                    DpError::InvalidPair(relation, "no node removal maps one graph to the other".into())
                })?;
            Ok(padded_at(small, k).upper_triangle_l1(large) as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::erdos_renyi;
    use crate::linalg::Matrix;
    use crate::rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::unlabeled(
            Adjacency::from_edges(n, edges.iter().copied()).unwrap(),
            Matrix::zeros(n, 2),
        )
        .unwrap()
    }

    #[test]
    fn one_node_one_edge_adds_node_and_edge() {
        let mut r = rng::seeded(1);
        let g = graph(4, &[(0, 1), (2, 3)]);
        let (a, b) = neighbor_pair_generate(NeighborRelation::OneNodeOneEdge, &g, &mut r).unwrap();
        assert_eq!(a, g);
        assert_eq!(b.num_nodes(), 5);
        assert_eq!(b.num_edges(), 3);
        assert_eq!(global_sensitivity_l1(NeighborRelation::OneNodeOneEdge, (&a, &b)).unwrap(), 1.0);
        assert_eq!(global_sensitivity_l1(NeighborRelation::OneNodeOneEdge, (&b, &a)).unwrap(), 1.0);
    }

    #[test]
    fn edge_level_on_triangle_has_three_outcomes() {
        let g = graph(3, &[(0, 1), (0, 2), (1, 2)]);
        let mut outs: Vec<Vec<(usize, usize)>> = (0..3)
            .map(|k| {
                let (_, b) = neighbor_pair_at(NeighborRelation::EdgeLevel, &g, k).unwrap();
                assert_eq!(b.num_edges(), 2);
                assert_eq!(
                    global_sensitivity_l1(NeighborRelation::EdgeLevel, (&g, &b)).unwrap(),
                    1.0
                );
                b.adjacency().edges().collect()
            })
            .collect();
        outs.sort();
        outs.dedup();
        assert_eq!(outs.len(), 3);
        let mut r = rng::seeded(0);
        for _ in 0..20 {
            let (_, b) = neighbor_pair_generate(NeighborRelation::EdgeLevel, &g, &mut r).unwrap();
            assert_eq!(b.num_edges(), 2);
        }
    }

    #[test]
    fn node_level_star_center_removal() {
        let g = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let (_, b) = neighbor_pair_at(NeighborRelation::NodeLevel, &g, 0).unwrap();
        assert_eq!(b.num_nodes(), 4);
        assert_eq!(b.num_edges(), 0);
        assert_eq!(global_sensitivity_l1(NeighborRelation::NodeLevel, (&g, &b)).unwrap(), 4.0);
        let (_, leaf) = neighbor_pair_at(NeighborRelation::NodeLevel, &g, 2).unwrap();
        assert_eq!(global_sensitivity_l1(NeighborRelation::NodeLevel, (&g, &leaf)).unwrap(), 1.0);
    }

    #[test]
    fn node_level_sensitivity_equals_removed_degree() {
        let mut r = rng::seeded(3);
        for _ in 0..50 {
            let adj = erdos_renyi(9, 0.4, &mut r);
            let g = Graph::unlabeled(adj, Matrix::zeros(9, 1)).unwrap();
            let k = r.random_range(0..9);
            let (_, b) = neighbor_pair_at(NeighborRelation::NodeLevel, &g, k).unwrap();
            let s = global_sensitivity_l1(NeighborRelation::NodeLevel, (&g, &b)).unwrap();
            assert_eq!(s, g.adjacency().degree(k) as f64);
        }
    }

    #[test]
    fn invalid_pairs_rejected() {
        let g = graph(3, &[(0, 1)]);
        let h = graph(3, &[(1, 2)]);
        assert!(global_sensitivity_l1(NeighborRelation::EdgeLevel, (&g, &h)).is_err());
        assert!(global_sensitivity_l1(NeighborRelation::EdgeLevel, (&g, &g)).is_err());
        let big = graph(4, &[(0, 1), (2, 3), (1, 3)]);
        assert!(global_sensitivity_l1(NeighborRelation::OneNodeOneEdge, (&g, &big)).is_err());
        let five = graph(5, &[(0, 1)]);
        assert!(global_sensitivity_l1(NeighborRelation::NodeLevel, (&g, &five)).is_err());
        // isolated extra node is a node-level neighbour but not one-node-one-edge
        let iso = graph(4, &[(0, 1)]);
        assert_eq!(global_sensitivity_l1(NeighborRelation::NodeLevel, (&g, &iso)).unwrap(), 0.0);
        assert!(global_sensitivity_l1(NeighborRelation::OneNodeOneEdge, (&g, &iso)).is_err());
    }

    #[test]
    fn no_neighbor_errors() {
        let empty = graph(0, &[]);
        let mut r = rng::seeded(0);
        for rel in NeighborRelation::ALL {
            assert!(neighbor_pair_generate(rel, &empty, &mut r).is_err());
        }
        let isolated = graph(2, &[]);
        assert!(neighbor_pair_generate(NeighborRelation::EdgeLevel, &isolated, &mut r).is_err());
        assert!(neighbor_pair_at(NeighborRelation::NodeLevel, &isolated, 2).is_err());
    }

    #[test]
    fn padding_in_the_middle_aligns_inserted_node() {
        // The added node need not be last: a pendant in the middle still
        // yields sensitivity 1.
        let small = graph(3, &[(0, 1), (1, 2)]);
        let large = graph(4, &[(0, 2), (2, 3), (1, 3)]); // old 0,1,2 -> 0,2,3; new node 1 - 3
        assert_eq!(
            global_sensitivity_l1(NeighborRelation::OneNodeOneEdge, (&small, &large)).unwrap(),
            1.0
        );
    }
}
