//! Undirected graphs with node features, single-node injection, and the
//! symmetric self-loop normalization used by GCN layers.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),
    #[error("feature width {got} does not match graph feature width {expected}")]
    FeatureWidth { expected: usize, got: usize },
    #[error("feature matrix has {got} rows, graph has {expected} nodes")]
    FeatureRows { expected: usize, got: usize },
    #[error("label count {got} does not match node count {expected}")]
    LabelCount { expected: usize, got: usize },
    #[error("label {label} on node {node} is not below class count {classes}")]
    LabelRange {
        node: usize,
        label: usize,
        classes: usize,
    },
    #[error("graph has no labels")]
    MissingLabels,
}

/// Index of a node within a specific graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i)
    }
}

/// Symmetric binary adjacency stored as sorted neighbor lists, no self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
    num_edges: usize,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n],
            num_edges: 0,
        }
    }

    /// Builds an adjacency from undirected edges. Duplicates (in either
    /// orientation) collapse to one edge.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut neighbors = vec![Vec::new(); n];
        for (u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(GraphError::NodeOutOfRange { node: w, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        let mut degree_sum = 0;
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
            degree_sum += list.len();
        }
        Ok(Self {
            neighbors,
            num_edges: degree_sum / 2,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes() && self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Copy with `extra` isolated nodes appended.
    pub fn padded(&self, extra: usize) -> Self {
        let mut out = self.clone();
        out.neighbors.extend(std::iter::repeat_with(Vec::new).take(extra));
        out
    }

    /// Copy with an extra node `n` connected to `target`.
    fn with_pendant(&self, target: usize) -> Self {
        let n = self.num_nodes();
        let mut out = self.padded(1);
        // n is larger than every existing index, so the list stays sorted.
        out.neighbors[target].push(n);
        out.neighbors[n].push(target);
        out.num_edges += 1;
        out
    }

    /// Relabels nodes: old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.num_nodes(), "permutation length mismatch");
        let edges = self.edges().map(|(u, v)| (perm[u], perm[v]));
        Self::from_edges(self.num_nodes(), edges).expect("a permutation preserves validity")
    }

    /// Subgraph induced by the first `k` nodes.
    pub fn prefix(&self, k: usize) -> Self {
        let edges = self.edges().filter(|&(_, v)| v < k);
        Self::from_edges(k, edges).expect("prefix edges stay in range")
    }

    /// Number of differing cells in the strict upper triangle. Panics on size
    /// mismatch; pad first.
    pub fn upper_triangle_l1(&self, other: &Adjacency) -> usize {
        assert_eq!(self.num_nodes(), other.num_nodes(), "pad before comparing");
        (0..self.num_nodes())
            .map(|u| {
                let a = self.neighbors[u].iter().filter(|&&v| v > u);
                let b = other.neighbors[u].iter().filter(|&&v| v > u);
                sorted_symmetric_difference(a, b)
            })
            .sum()
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.num_nodes();
        let mut m = Matrix::zeros(n, n);
        for (u, v) in self.edges() {
            m[(u, v)] = 1.0;
            m[(v, u)] = 1.0;
        }
        m
    }
}

fn sorted_symmetric_difference<'a>(
    a: impl Iterator<Item = &'a usize>,
    b: impl Iterator<Item = &'a usize>,
) -> usize {
    let mut a = a.peekable();
    let mut b = b.peekable();
    let mut diff = 0;
    loop {
        match (a.peek(), b.peek()) {
            (Some(x), Some(y)) if x == y => {
                a.next();
                b.next();
            }
            (Some(x), Some(y)) if x < y => {
                a.next();
                diff += 1;
            }
            (Some(_), Some(_)) => {
                b.next();
                diff += 1;
            }
            (Some(_), None) => {
                a.next();
                diff += 1;
            }
            (None, Some(_)) => {
                b.next();
                diff += 1;
            }
            (None, None) => return diff,
        }
    }
}

/// Per-column min/max of a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanges {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureRanges {
    pub fn of(features: &Matrix) -> Self {
        let d = features.cols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in features.iter_rows() {
            for (k, &x) in row.iter().enumerate() {
                min[k] = min[k].min(x);
                max[k] = max[k].max(x);
            }
        }
        Self { min, max }
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.min[k], self.max[k]);
        }
    }
}

/// An undirected graph with a dense feature matrix and optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Adjacency,
    features: Matrix,
    labels: Option<Vec<usize>>,
    num_classes: usize,
}

impl Graph {
    pub fn new(
        adjacency: Adjacency,
        features: Matrix,
        labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self, GraphError> {
        let n = adjacency.num_nodes();
        if features.rows() != n {
            return Err(GraphError::FeatureRows {
                expected: n,
                got: features.rows(),
            });
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(GraphError::LabelCount {
                    expected: n,
                    got: labels.len(),
                });
            }
            if let Some((node, &label)) =
                labels.iter().enumerate().find(|(_, &l)| l >= num_classes)
            {
                return Err(GraphError::LabelRange {
                    node,
                    label,
                    classes: num_classes,
                });
            }
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            num_classes,
        })
    }

    /// Graph without labels.
    pub fn unlabeled(adjacency: Adjacency, features: Matrix) -> Result<Self, GraphError> {
        Self::new(adjacency, features, None, 0)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.num_nodes()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.num_edges()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn feature_ranges(&self) -> FeatureRanges {
        FeatureRanges::of(&self.features)
    }

    pub fn check_node(&self, id: NodeId) -> Result<(), GraphError> {
        if id.0 < self.num_nodes() {
            Ok(())
        } else {
            Err(GraphError::NodeOutOfRange {
                node: id.0,
                n: self.num_nodes(),
            })
        }
    }

    /// Same nodes, features and labels over a different edge set.
    pub fn with_adjacency(&self, adjacency: Adjacency) -> Result<Self, GraphError> {
        Self::new(
            adjacency,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
        )
    }

    /// Copy with node `target`'s feature row replaced.
    pub fn with_node_features(&self, target: NodeId, row: &[f64]) -> Result<Self, GraphError> {
        self.check_node(target)?;
        self.check_width(row)?;
        let mut out = self.clone();
        out.features.row_mut(target.0).copy_from_slice(row);
        Ok(out)
    }

    fn check_width(&self, row: &[f64]) -> Result<(), GraphError> {
        if row.len() == self.feature_dim() {
            Ok(())
        } else {
            Err(GraphError::FeatureWidth {
                expected: self.feature_dim(),
                got: row.len(),
            })
        }
    }

    /// Appends a node with the given features and a single edge to `target`.
    ///
    /// The receiver is left untouched. An injected node of a labeled graph
    /// gets label 0; labels of injected nodes are never used for training or
    /// evaluation.
    pub fn inject_node(
        &self,
        features: &[f64],
        target: NodeId,
    ) -> Result<(Graph, InjectionRecord), GraphError> {
        self.check_width(features)?;
        self.check_node(target)?;
        let new_node = NodeId(self.num_nodes());
        let mut x = self.features.clone();
        x.push_row(features);
        let labels = self.labels.clone().map(|mut l| {
            l.push(0);
            l
        });
        let g = Graph {
            adjacency: self.adjacency.with_pendant(target.0),
            features: x,
            labels,
            num_classes: self.num_classes,
        };
        let record = InjectionRecord {
            new_node,
            target,
            features: features.to_vec(),
        };
        Ok((g, record))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionRecord {
    pub new_node: NodeId,
    pub target: NodeId,
    pub features: Vec<f64>,
}

/// Which rule produced a [`NormalizedAdjacency`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// `D^{-1/2} (A + I) D^{-1/2}`, D the degree matrix of `A + I`.
    SymmetricSelfLoop,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalization::SymmetricSelfLoop => f.write_str("sym_self_loop"),
        }
    }
}

/// Sparse normalized adjacency in compressed-row form. Each row lists its
/// columns in ascending order, self-loop included.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    provenance: Normalization,
}

impl NormalizedAdjacency {
    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn provenance(&self) -> Normalization {
        self.provenance
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    /// Sparse-dense product `Â · m`.
    pub fn spmm(&self, m: &Matrix) -> Matrix {
        assert_eq!(self.dim(), m.rows(), "spmm dimension mismatch");
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for i in 0..self.dim() {
            // Accumulate into a local buffer; out.row_mut borrows `out`.
            let mut acc = vec![0.0; m.cols()];
            for (j, w) in self.row(i) {
                for (a, &x) in acc.iter_mut().zip(m.row(j)) {
                    *a += w * x;
                }
            }
            out.row_mut(i).copy_from_slice(&acc);
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.dim();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for (j, w) in self.row(i) {
                m[(i, j)] = w;
            }
        }
        m
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` where D is the degree matrix of `A + I`.
pub fn normalize_adjacency(adjacency: &Adjacency) -> NormalizedAdjacency {
    let n = adjacency.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / ((adjacency.degree(i) + 1) as f64).sqrt())
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(2 * adjacency.num_edges() + n);
    let mut vals = Vec::with_capacity(cols.capacity());
    row_ptr.push(0);
    for i in 0..n {
        let nbrs = adjacency.neighbors(i);
        let split = nbrs.partition_point(|&j| j < i);
        let ordered = nbrs[..split]
            .iter()
            .chain(std::iter::once(&i))
            .chain(&nbrs[split..]);
        for &j in ordered {
            cols.push(j);
            vals.push(inv_sqrt[i] * inv_sqrt[j]);
        }
        row_ptr.push(cols.len());
    }
    NormalizedAdjacency {
        row_ptr,
        cols,
        vals,
        provenance: Normalization::SymmetricSelfLoop,
    }
}

/// Breadth-first hop distances from `source`; `None` for unreachable nodes.
pub fn hop_distances(adjacency: &Adjacency, source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adjacency.num_nodes()];
    let mut queue = std::collections::VecDeque::new();
    dist[source] = Some(0);
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap_or(0);
        for &v in adjacency.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Adjacency {
        Adjacency::from_edges(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn inject_into_single_edge_graph() {
        let adj = Adjacency::from_edges(2, [(0, 1)]).unwrap();
        let g = Graph::unlabeled(adj, Matrix::from_rows(&[[0.5], [2.0]]).unwrap()).unwrap();
        let (g2, rec) = g.inject_node(&[1.0], NodeId(0)).unwrap();
        assert_eq!(g2.num_nodes(), 3);
        assert_eq!(g2.adjacency().edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2)]);
        assert_eq!(g2.features().row(2), &[1.0]);
        assert_eq!(rec.new_node, NodeId(2));
        assert_eq!(rec.target, NodeId(0));
        // original untouched
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn inject_into_isolated_node() {
        let g = Graph::unlabeled(Adjacency::empty(1), Matrix::zeros(1, 2)).unwrap();
        let (g2, _) = g.inject_node(&[0.0, 0.0], NodeId(0)).unwrap();
        assert_eq!(g2.num_edges(), 1);
        let padded = g.adjacency().padded(1);
        let diff = padded.to_dense().max_abs_diff(&g2.adjacency().to_dense());
        assert_eq!(diff, 1.0);
        let l1: f64 = padded
            .to_dense()
            .as_slice()
            .iter()
            .zip(g2.adjacency().to_dense().as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert_eq!(l1, 2.0);
        assert_eq!(padded.upper_triangle_l1(g2.adjacency()), 1);
    }

    #[test]
    fn inject_errors() {
        let g = Graph::unlabeled(Adjacency::empty(2), Matrix::zeros(2, 3)).unwrap();
        assert_eq!(
            g.inject_node(&[1.0], NodeId(0)).unwrap_err(),
            GraphError::FeatureWidth {
                expected: 3,
                got: 1
            }
        );
        assert_eq!(
            g.inject_node(&[0.0; 3], NodeId(2)).unwrap_err(),
            GraphError::NodeOutOfRange { node: 2, n: 2 }
        );
    }

    #[test]
    fn adjacency_validation() {
        assert_eq!(
            Adjacency::from_edges(2, [(0, 0)]).unwrap_err(),
            GraphError::SelfLoop(0)
        );
        assert!(Adjacency::from_edges(2, [(0, 2)]).is_err());
        let a = Adjacency::from_edges(3, [(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(a.num_edges(), 1);
    }

    #[test]
    fn graph_validation() {
        let adj = Adjacency::empty(2);
        assert!(Graph::new(adj.clone(), Matrix::zeros(3, 1), None, 0).is_err());
        assert!(Graph::new(adj.clone(), Matrix::zeros(2, 1), Some(vec![0]), 1).is_err());
        assert_eq!(
            Graph::new(adj, Matrix::zeros(2, 1), Some(vec![0, 2]), 2).unwrap_err(),
            GraphError::LabelRange {
                node: 1,
                label: 2,
                classes: 2
            }
        );
    }

    #[test]
    fn normalize_single_node() {
        let a = normalize_adjacency(&Adjacency::empty(1));
        assert_eq!(a.to_dense(), Matrix::identity(1));
        assert_eq!(a.provenance(), Normalization::SymmetricSelfLoop);
    }

    #[test]
    fn normalize_single_edge() {
        let a = normalize_adjacency(&Adjacency::from_edges(2, [(0, 1)]).unwrap());
        let d = a.to_dense();
        for x in d.as_slice() {
            assert!((x - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_path_against_dense_oracle() {
        // Dense oracle: D^{-1/2}(A+I)D^{-1/2} with explicit matrices.
        let adj = path3();
        let mut a_tilde = adj.to_dense();
        for i in 0..3 {
            a_tilde[(i, i)] += 1.0;
        }
        let mut d_inv_sqrt = Matrix::zeros(3, 3);
        for i in 0..3 {
            let deg: f64 = a_tilde.row(i).iter().sum();
            d_inv_sqrt[(i, i)] = deg.powf(-0.5);
        }
        let oracle = d_inv_sqrt.matmul(&a_tilde).matmul(&d_inv_sqrt);
        let got = normalize_adjacency(&adj).to_dense();
        assert!(got.max_abs_diff(&oracle) < 1e-15);
        assert!((got[(0, 1)] - 1.0 / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn upper_triangle_l1_counts_cells() {
        let a = Adjacency::from_edges(4, [(0, 1), (1, 2)]).unwrap();
        let b = Adjacency::from_edges(4, [(0, 1), (2, 3), (0, 3)]).unwrap();
        assert_eq!(a.upper_triangle_l1(&b), 3);
        assert_eq!(a.upper_triangle_l1(&a), 0);
    }

    #[test]
    fn hop_distances_on_path() {
        let d = hop_distances(&path3().padded(1), 0);
        assert_eq!(d, vec![Some(0), Some(1), Some(2), None]);
    }

    #[test]
    fn permute_and_prefix() {
        let a = path3();
        let p = a.permuted(&[2, 1, 0]);
        assert_eq!(p, a);
        let q = a.permuted(&[0, 2, 1]);
        assert_eq!(q.edges().collect::<Vec<_>>(), vec![(0, 2), (1, 2)]);
        assert_eq!(q.prefix(2).num_edges(), 0);
    }
}
