//! Node-injection link stealing: query the targets, inject one crafted node
//! wired to `v_t`, query again and rank targets by how far their predictions
//! moved.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::gcn::PredictionMatrix;
use crate::graph::NodeId;
use crate::linalg::{argmax, l1_distance, Matrix};
use crate::metrics::Metrics;
use crate::server::{BlackBox, Resettable, ServerError};

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("target {0} is not in the target set")]
    TargetNotInSet(NodeId),
    #[error("duplicate node {0} in the target set")]
    DuplicateTarget(NodeId),
    #[error("{strategy} needs {what}")]
    MissingKnowledge {
        strategy: StrategyKind,
        what: &'static str,
    },
    #[error("{0}: every target shares the predicted class of v_t")]
    NoOtherClass(StrategyKind),
    #[error("influence delta must be positive and finite, got {0}")]
    Delta(f64),
    #[error("knowledge matrix has shape {got:?}, expected ({rows}, {cols})")]
    KnowledgeShape {
        got: (usize, usize),
        rows: usize,
        cols: usize,
    },
    #[error("optimal threshold needs ground truth")]
    NeedsTruth,
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error(transparent)]
    Server(#[from] ServerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StrategyKind {
    AllOnes,
    AllZeros,
    Identity,
    MaxAttributes,
    ClassRepresentative,
    Influence(f64),
}

impl StrategyKind {
    pub fn validate(&self) -> Result<(), AttackError> {
        match *self {
            StrategyKind::Influence(d) if !(d > 0.0 && d.is_finite()) => Err(AttackError::Delta(d)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::AllOnes => f.write_str("all_ones"),
            StrategyKind::AllZeros => f.write_str("all_zeros"),
            StrategyKind::Identity => f.write_str("identity"),
            StrategyKind::MaxAttributes => f.write_str("max_attributes"),
            StrategyKind::ClassRepresentative => f.write_str("class_representative"),
            StrategyKind::Influence(d) => write!(f, "influence:{d}"),
        }
    }
}

impl FromStr for StrategyKind {
    type Err = AttackError;

    /// Accepts the [`Display`](fmt::Display) names; `influence` alone uses
    /// delta 0.01.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let kind = match s {
            "all_ones" => StrategyKind::AllOnes,
            "all_zeros" => StrategyKind::AllZeros,
            "identity" => StrategyKind::Identity,
            "max_attributes" => StrategyKind::MaxAttributes,
            "class_representative" => StrategyKind::ClassRepresentative,
            "influence" => StrategyKind::Influence(0.01),
            _ => match s.strip_prefix("influence:").map(str::parse::<f64>) {
                Some(Ok(d)) => StrategyKind::Influence(d),
                _ => return Err(AttackError::UnknownStrategy(s.to_string())),
            },
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// What the adversary holds when crafting `x_m`.
#[derive(Debug, Clone)]
pub struct AttackContext {
    pub targets: Vec<NodeId>,
    pub target: NodeId,
    /// Row of `target` within `targets`.
    pub target_pos: usize,
    pub predictions: PredictionMatrix,
    /// Feature rows aligned with `targets`, when known.
    pub knowledge: Option<Matrix>,
    pub feature_dim: usize,
    pub predicted_classes: Vec<usize>,
}

impl AttackContext {
    pub fn new(
        targets: Vec<NodeId>,
        target: NodeId,
        predictions: PredictionMatrix,
        knowledge: Option<Matrix>,
        feature_dim: usize,
    ) -> Result<Self, AttackError> {
        let target_pos = position_of(&targets, target)?;
        assert_eq!(predictions.num_rows(), targets.len(), "one prediction row per target");
        if let Some(k) = &knowledge {
            if k.shape() != (targets.len(), feature_dim) {
                return Err(AttackError::KnowledgeShape {
                    got: k.shape(),
                    rows: targets.len(),
                    cols: feature_dim,
                });
            }
        }
        let predicted_classes = predictions.predicted_classes();
        Ok(Self {
            targets,
            target,
            target_pos,
            predictions,
            knowledge,
            feature_dim,
            predicted_classes,
        })
    }

    fn knowledge_for(&self, kind: StrategyKind, what: &'static str) -> Result<&Matrix, AttackError> {
        self.knowledge.as_ref().ok_or(AttackError::MissingKnowledge { strategy: kind, what })
    }

    /// Positions of targets whose predicted class differs from `v_t`'s.
    fn other_class(&self) -> Vec<usize> {
        let ct = self.predicted_classes[self.target_pos];
        (0..self.targets.len())
            .filter(|&i| self.predicted_classes[i] != ct)
            .collect()
    }
}

fn position_of(targets: &[NodeId], target: NodeId) -> Result<usize, AttackError> {
    let mut sorted: Vec<NodeId> = targets.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(AttackError::DuplicateTarget(w[0]));
    }
    targets
        .iter()
        .position(|&t| t == target)
        .ok_or(AttackError::TargetNotInSet(target))
}

/// The malicious feature vector for `kind`.
pub fn generate_features(kind: StrategyKind, ctx: &AttackContext) -> Result<Vec<f64>, AttackError> {
    kind.validate()?;
    let d = ctx.feature_dim;
    Ok(match kind {
        StrategyKind::AllOnes => vec![1.0; d],
        StrategyKind::AllZeros => vec![0.0; d],
        StrategyKind::Identity => ctx.knowledge_for(kind, "x_t")?.row(ctx.target_pos).to_vec(),
        StrategyKind::Influence(delta) => ctx
            .knowledge_for(kind, "x_t")?
            .row(ctx.target_pos)
            .iter()
            .map(|x| x + delta)
            .collect(),
        StrategyKind::MaxAttributes => {
            let x = ctx.knowledge_for(kind, "target features")?;
            let others = ctx.other_class();
            if others.is_empty() {
                return Err(AttackError::NoOtherClass(kind));
            }
            let mut out = vec![f64::NEG_INFINITY; d];
            for &i in &others {
                for (o, &v) in out.iter_mut().zip(x.row(i)) {
                    *o = o.max(v);
                }
            }
            out
        }
        StrategyKind::ClassRepresentative => {
            let x = ctx.knowledge_for(kind, "target features")?;
            let mut best: Option<(usize, f64)> = None;
            for i in ctx.other_class() {
                let row = ctx.predictions.row(i);
                let conf = row[argmax(row)];
                if best.is_none_or(|(_, c)| conf > c) {
                    best = Some((i, conf));
                }
            }
            let (i, _) = best.ok_or(AttackError::NoOtherClass(kind))?;
            x.row(i).to_vec()
        }
    })
}

/// Per-target L1 change between two aligned prediction matrices.
pub fn prediction_shift(before: &PredictionMatrix, after: &PredictionMatrix) -> Vec<f64> {
    (0..before.num_rows())
        .map(|i| l1_distance(before.row(i), after.row(i)))
        .collect()
}

/// Chooses `R` for a distance vector with ground truth `truth[i]`.
///
/// Candidates are one below the minimum, the midpoints between consecutive
/// distinct sorted values and one above the maximum. Returns `(R, F1)` with
/// ties going to the larger `R`.
pub fn tune_threshold(distances: &[f64], truth: &[bool]) -> (f64, f64) {
    assert_eq!(distances.len(), truth.len());
    let actual = truth.iter().filter(|&&t| t).count();
    if distances.is_empty() {
        return (1.0, 0.0);
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    // Distinct values ascending with their (count, positives).
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &i in &order {
        let v = distances[i];
        match groups.last_mut() {
            Some(g) if g.0 == v => {
                g.1 += 1;
                g.2 += usize::from(truth[i]);
            }
            _ => groups.push((v, 1, usize::from(truth[i]))),
        }
    }
    // Predicted set for a candidate is a suffix of the groups.
    let mut best = (groups[groups.len() - 1].0 + 1.0, 0.0);
    let (mut pred, mut tp) = (0, 0);
    for k in (0..groups.len()).rev() {
        pred += groups[k].1;
        tp += groups[k].2;
        let r = if k == 0 {
            groups[0].0 - 1.0
        } else {
            let (lo, hi) = (groups[k - 1].0, groups[k].0);
            let mid = lo + (hi - lo) / 2.0;
            if mid > lo { mid } else { hi }
        };
        let f1 = Metrics::from_counts(tp, pred, actual).f1;
        // Walking toward smaller R; only strictly better replaces.
        if f1 > best.1 {
            best = (r, f1);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Tune `R` for best F1 against ground truth.
    Optimal,
    Fixed(f64),
    /// Predict the `k` largest distances (ties at the boundary included).
    TopK(usize),
}

impl ThresholdPolicy {
    pub fn choose(&self, distances: &[f64], truth: Option<&[bool]>) -> Result<f64, AttackError> {
        match *self {
            ThresholdPolicy::Optimal => {
                let truth = truth.ok_or(AttackError::NeedsTruth)?;
                Ok(tune_threshold(distances, truth).0)
            }
            ThresholdPolicy::Fixed(r) => Ok(r),
            ThresholdPolicy::TopK(k) => {
                let mut d = distances.to_vec();
                d.sort_by(|a, b| b.total_cmp(a));
                Ok(match k {
                    _ if d.is_empty() => 1.0,
                    0 => d[0] + 1.0,
                    k if k >= d.len() => d[d.len() - 1] - 1.0,
                    k => d[k - 1],
                })
            }
        }
    }
}

/// Knowledge and setting for one attack run.
#[derive(Debug, Clone, Copy)]
pub struct AttackInput<'a> {
    pub targets: &'a [NodeId],
    pub target: NodeId,
    /// Feature rows aligned with `targets`.
    pub knowledge: Option<&'a Matrix>,
    pub feature_dim: usize,
}

/// Raw outcome of the query-inject-query cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub targets: Vec<NodeId>,
    pub target: NodeId,
    pub target_pos: usize,
    /// `D(v)` aligned with `targets`, `v_t` included.
    pub distances: Vec<f64>,
    pub malicious_features: Vec<f64>,
}

impl Scores {
    /// Candidates `V_A \ {v_t}` and their distances.
    pub fn candidates(&self) -> (Vec<NodeId>, Vec<f64>) {
        self.targets
            .iter()
            .zip(&self.distances)
            .enumerate()
            .filter(|&(i, _)| i != self.target_pos)
            .map(|(_, (&v, &d))| (v, d))
            .unzip()
    }

    pub fn predicted(&self, threshold: f64) -> Vec<NodeId> {
        let (nodes, d) = self.candidates();
        nodes
            .into_iter()
            .zip(d)
            .filter(|&(_, d)| d >= threshold)
            .map(|(v, _)| v)
            .collect()
    }
}

/// Steps 1 to 6 up to the distance vector. The server is reset before
/// returning, on success or failure.
pub fn measure<S>(server: &mut S, input: &AttackInput<'_>, kind: StrategyKind) -> Result<Scores, AttackError>
where
    S: BlackBox + Resettable + ?Sized,
{
    let out = measure_inner(server, input, kind);
    server.reset();
    out
}

fn measure_inner<S>(server: &mut S, input: &AttackInput<'_>, kind: StrategyKind) -> Result<Scores, AttackError>
where
    S: BlackBox + Resettable + ?Sized,
{
    let before = server.predict(input.targets)?;
    let ctx = AttackContext::new(
        input.targets.to_vec(),
        input.target,
        before,
        input.knowledge.cloned(),
        input.feature_dim,
    )?;
    let x_m = generate_features(kind, &ctx)?;
    server.connect(&x_m, input.target)?;
    let after = server.predict(input.targets)?;
    Ok(Scores {
        distances: prediction_shift(&ctx.predictions, &after),
        targets: ctx.targets,
        target: ctx.target,
        target_pos: ctx.target_pos,
        malicious_features: x_m,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    pub target: NodeId,
    pub targets: Vec<NodeId>,
    pub distances: Vec<f64>,
    pub threshold: f64,
    pub predicted_neighbors: Vec<NodeId>,
    pub truth: Option<Vec<NodeId>>,
    pub metrics: Option<Metrics>,
}

/// Full attack. `truth` is the true neighbour set of `v_t` (restricted to the
/// targets when scoring).
pub fn run_attack<S>(
    server: &mut S,
    input: &AttackInput<'_>,
    kind: StrategyKind,
    policy: ThresholdPolicy,
    truth: Option<&[NodeId]>,
) -> Result<AttackResult, AttackError>
where
    S: BlackBox + Resettable + ?Sized,
{
    let scores = measure(server, input, kind)?;
    let (nodes, d) = scores.candidates();
    let truth_in_targets: Option<Vec<NodeId>> =
        truth.map(|t| nodes.iter().copied().filter(|v| t.contains(v)).collect());
    let mask: Option<Vec<bool>> = truth_in_targets
        .as_ref()
        .map(|t| nodes.iter().map(|v| t.contains(v)).collect());
    let threshold = policy.choose(&d, mask.as_deref())?;
    let predicted_neighbors = scores.predicted(threshold);
    let metrics = truth_in_targets
        .as_ref()
        .map(|t| Metrics::of_sets(&predicted_neighbors, t));
    Ok(AttackResult {
        target: scores.target,
        targets: scores.targets,
        distances: scores.distances,
        threshold,
        predicted_neighbors,
        truth: truth_in_targets,
        metrics,
    })
}
