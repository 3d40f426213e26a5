//! Comparison attacks that infer edges among the targets without injecting:
//! influence probing and posterior/attribute distance ranking.

use thiserror::Error;

use crate::gcn::PredictionMatrix;
use crate::graph::NodeId;
use crate::linalg::{cosine_distance, euclidean_distance, l1_distance, Matrix};
use crate::server::{BlackBox, FeatureProbe, ServerError};

pub const DEFAULT_PROBE_DELTA: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("k = {k} exceeds the {pairs} available pairs")]
    TooManyPairs { k: usize, pairs: usize },
    #[error("probe delta must be positive and finite, got {0}")]
    Delta(f64),
    #[error("{rows} rows for {targets} targets")]
    Rows { rows: usize, targets: usize },
    #[error(transparent)]
    Server(#[from] ServerError),
}

/// An undirected pair, smaller id first.
pub type Pair = (NodeId, NodeId);

fn pair(a: NodeId, b: NodeId) -> Pair {
    if a <= b { (a, b) } else { (b, a) }
}

/// `values[(u, v)]`: L1 change of `v`'s prediction per unit shift of `u`'s
/// features, rows and columns aligned with `targets`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    pub targets: Vec<NodeId>,
    pub values: Matrix,
}

impl InfluenceMatrix {
    pub fn symmetric(&self, i: usize, j: usize) -> f64 {
        (self.values[(i, j)] + self.values[(j, i)]) / 2.0
    }
}

pub fn influence_matrix<S>(server: &S, targets: &[NodeId], delta: f64) -> Result<InfluenceMatrix, BaselineError>
where
    S: BlackBox + FeatureProbe + ?Sized,
{
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(BaselineError::Delta(delta));
    }
    let base = server.predict(targets)?;
    let n = targets.len();
    let mut values = Matrix::zeros(n, n);
    for (i, &u) in targets.iter().enumerate() {
        let shifted = server.predict_with_shift(u, delta, targets)?;
        for j in 0..n {
            values.as_mut_slice()[i * n + j] = l1_distance(shifted.row(j), base.row(j)) / delta;
        }
    }
    Ok(InfluenceMatrix {
        targets: targets.to_vec(),
        values,
    })
}

/// The `k` best-scoring pairs among `n` items, ties broken by index order.
fn top_k_pairs(n: usize, k: usize, score: impl Fn(usize, usize) -> f64, largest: bool) -> Result<Vec<(usize, usize)>, BaselineError> {
    let pairs = n * n.saturating_sub(1) / 2;
    if k > pairs {
        return Err(BaselineError::TooManyPairs { k, pairs });
    }
    let mut scored: Vec<(f64, usize, usize)> = Vec::with_capacity(pairs);
    for i in 0..n {
        for j in i + 1..n {
            let s = score(i, j);
            scored.push((if largest { -s } else { s }, i, j));
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(scored.into_iter().take(k).map(|(_, i, j)| (i, j)).collect())
}

fn to_pairs(targets: &[NodeId], idx: Vec<(usize, usize)>) -> Vec<Pair> {
    idx.into_iter().map(|(i, j)| pair(targets[i], targets[j])).collect()
}

/// Probes every target's features and predicts the `k` pairs with the largest
/// symmetrised influence.
pub fn linkteller_attack<S>(server: &S, targets: &[NodeId], delta: f64, k: usize) -> Result<Vec<Pair>, BaselineError>
where
    S: BlackBox + FeatureProbe + ?Sized,
{
    let n = targets.len();
    let pairs = n * n.saturating_sub(1) / 2;
    if k > pairs {
        return Err(BaselineError::TooManyPairs { k, pairs });
    }
    let m = influence_matrix(server, targets, delta)?;
    Ok(to_pairs(targets, top_k_pairs(n, k, |i, j| m.symmetric(i, j), true)?))
}

/// Row distance used by the distance baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Euclidean,
    Cosine,
}

impl Distance {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => euclidean_distance(a, b),
            Distance::Cosine => cosine_distance(a, b),
        }
    }
}

/// The `k` closest pairs of rows under `distance`.
pub fn distance_attack(rows: &Matrix, targets: &[NodeId], distance: Distance, k: usize) -> Result<Vec<Pair>, BaselineError> {
    if rows.rows() != targets.len() {
        return Err(BaselineError::Rows {
            rows: rows.rows(),
            targets: targets.len(),
        });
    }
    let idx = top_k_pairs(targets.len(), k, |i, j| distance.eval(rows.row(i), rows.row(j)), false)?;
    Ok(to_pairs(targets, idx))
}

/// Posterior-distance baseline (Euclidean).
pub fn lsa2_post(p: &PredictionMatrix, targets: &[NodeId], k: usize) -> Result<Vec<Pair>, BaselineError> {
    distance_attack(p.matrix(), targets, Distance::Euclidean, k)
}

/// Attribute-distance baseline (cosine).
pub fn lsa2_attr(x: &Matrix, targets: &[NodeId], k: usize) -> Result<Vec<Pair>, BaselineError> {
    distance_attack(x, targets, Distance::Cosine, k)
}

/// True edges among `targets`, as pairs.
pub fn edges_among(adj: &crate::graph::Adjacency, targets: &[NodeId]) -> Vec<Pair> {
    let mut out = Vec::new();
    for (i, &u) in targets.iter().enumerate() {
        for &v in &targets[i + 1..] {
            if adj.has_edge(u.0, v.0) {
                out.push(pair(u, v));
            }
        }
    }
    out
}
