//! The server side of the threat model: a frozen GCN answering prediction
//! queries by node ID and accepting `connect` queries that attach a new node
//! to an existing one, optionally behind the LapGraph defense.
//!
//! Adversaries see only [`BlackBox`]. [`Resettable`] and [`FeatureProbe`] are
//! harness-side extensions.

use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::dp::{lapgraph, BudgetLedger, DpError, LapGraphConfig};
use crate::gcn::{forward, GcnError, GcnModel, PredictionMatrix};
use crate::graph::{normalize_adjacency, Graph, GraphError, NodeId, NormalizedAdjacency};
use crate::rng::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum ServerError {
    #[error("unknown node id {0}")]
    UnknownId(NodeId),
    #[error("feature probing is not available on a defended server")]
    ProbeUnsupported,
    #[error("defended server needs the training release in its ledger")]
    MissingTrainingRelease,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Gcn(#[from] GcnError),
    #[error(transparent)]
    Dp(#[from] DpError),
}

/// The adversary-visible API.
pub trait BlackBox {
    /// Prediction rows for `ids`, in the given order.
    fn predict(&self, ids: &[NodeId]) -> Result<PredictionMatrix, ServerError>;
    /// Adds a node with `features` and one edge to `target`; returns its id.
    fn connect(&mut self, features: &[f64], target: NodeId) -> Result<NodeId, ServerError>;
}

/// Restores the state captured when the server was built (or last
/// snapshotted).
pub trait Resettable {
    fn reset(&mut self);
}

/// Prediction under a hypothetical feature change of one existing node,
/// leaving the server untouched.
pub trait FeatureProbe {
    fn predict_with_shift(
        &self,
        node: NodeId,
        delta: f64,
        ids: &[NodeId],
    ) -> Result<PredictionMatrix, ServerError>;
}

/// One audited query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryEvent {
    pub query: &'static str,
    pub ids: Vec<usize>,
    pub epsilon: f64,
}

/// Query log; clones copy the events so far.
#[derive(Debug, Default)]
struct TraceLog(Mutex<Vec<QueryEvent>>);

impl TraceLog {
    fn push(&self, e: QueryEvent) {
        self.0.lock().expect("trace lock").push(e);
    }

    fn take(&self) -> Vec<QueryEvent> {
        std::mem::take(&mut *self.0.lock().expect("trace lock"))
    }
}

impl Clone for TraceLog {
    fn clone(&self) -> Self {
        Self(Mutex::new(self.0.lock().expect("trace lock").clone()))
    }
}

#[derive(Debug, Clone)]
struct Version {
    graph: Arc<Graph>,
    working: Arc<NormalizedAdjacency>,
    predictions: Arc<PredictionMatrix>,
}

impl Version {
    fn build(graph: Graph, working: NormalizedAdjacency, model: &GcnModel) -> Result<Self, ServerError> {
        let predictions = forward(model, &working, graph.features())?;
        Ok(Self {
            graph: Arc::new(graph),
            working: Arc::new(working),
            predictions: Arc::new(predictions),
        })
    }
}

#[derive(Debug, Clone)]
struct Defense {
    config: LapGraphConfig,
    rng: Rng,
}

#[derive(Debug, Clone)]
pub struct Server {
    model: Arc<GcnModel>,
    current: Version,
    snapshot: Version,
    snapshot_ledger_len: usize,
    defense: Option<Defense>,
    ledger: BudgetLedger,
    trace: Option<TraceLog>,
}

/// Applies LapGraph to the training graph and books the spend as ledger
/// entry `"train"`. The returned graph keeps the true features and labels.
pub fn release_training_graph(
    g: &Graph,
    config: &LapGraphConfig,
    rng: &mut Rng,
    ledger: &mut BudgetLedger,
) -> Result<Graph, ServerError> {
    let released = lapgraph(g.adjacency(), config, rng)?;
    ledger.compose(config.epsilon, "train")?;
    Ok(g.with_adjacency(released)?)
}

impl Server {
    /// Undefended server: predictions use the true graph.
    pub fn new(graph: Graph, model: Arc<GcnModel>) -> Result<Self, ServerError> {
        let working = normalize_adjacency(graph.adjacency());
        let version = Version::build(graph, working, &model)?;
        Ok(Self {
            model,
            snapshot: version.clone(),
            current: version,
            snapshot_ledger_len: 0,
            defense: None,
            ledger: BudgetLedger::new(),
            trace: None,
        })
    }

    /// Defended server. `released` is the LapGraph output the model was
    /// trained on and `ledger` already records that application; every
    /// connect draws a fresh release of the whole updated graph from `rng`.
    pub fn defended(
        graph: Graph,
        model: Arc<GcnModel>,
        config: LapGraphConfig,
        released: &Graph,
        ledger: BudgetLedger,
        rng: Rng,
    ) -> Result<Self, ServerError> {
        config.validate()?;
        if ledger.is_empty() {
            return Err(ServerError::MissingTrainingRelease);
        }
        if released.num_nodes() != graph.num_nodes() {
            return Err(GraphError::FeatureRows {
                expected: graph.num_nodes(),
                got: released.num_nodes(),
            }
            .into());
        }
        let working = normalize_adjacency(released.adjacency());
        let version = Version::build(graph, working, &model)?;
        Ok(Self {
            model,
            snapshot: version.clone(),
            current: version,
            snapshot_ledger_len: ledger.len(),
            defense: Some(Defense { config, rng }),
            ledger,
            trace: None,
        })
    }

    pub fn is_defended(&self) -> bool {
        self.defense.is_some()
    }

    /// True (unperturbed) current graph.
    pub fn graph(&self) -> &Graph {
        &self.current.graph
    }

    pub fn working_adjacency(&self) -> &NormalizedAdjacency {
        &self.current.working
    }

    pub fn model(&self) -> &GcnModel {
        &self.model
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    /// Predictions for every node of the current version.
    pub fn all_predictions(&self) -> &PredictionMatrix {
        &self.current.predictions
    }

    /// Makes the current state the one [`Resettable::reset`] returns to.
    pub fn snapshot(&mut self) {
        self.snapshot = self.current.clone();
        self.snapshot_ledger_len = self.ledger.len();
    }

    /// Replaces the defense noise source; no effect on an undefended server.
    pub fn reseed(&mut self, rng: Rng) {
        if let Some(d) = self.defense.as_mut() {
            d.rng = rng;
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(TraceLog::default);
    }

    pub fn take_trace(&mut self) -> Vec<QueryEvent> {
        self.trace.as_ref().map(TraceLog::take).unwrap_or_default()
    }

    fn record(&self, query: &'static str, ids: Vec<usize>, epsilon: f64) {
        if let Some(t) = &self.trace {
            t.push(QueryEvent {
                query,
                ids,
                epsilon,
            });
        }
    }

    fn check_ids(&self, ids: &[NodeId]) -> Result<Vec<usize>, ServerError> {
        let n = self.current.graph.num_nodes();
        ids.iter()
            .map(|&id| if id.0 < n { Ok(id.0) } else { Err(ServerError::UnknownId(id)) })
            .collect()
    }
}

impl BlackBox for Server {
    fn predict(&self, ids: &[NodeId]) -> Result<PredictionMatrix, ServerError> {
        let idx = self.check_ids(ids)?;
        let p = self.current.predictions.select(&idx);
        self.record("predict", idx, 0.0);
        Ok(p)
    }

    fn connect(&mut self, features: &[f64], target: NodeId) -> Result<NodeId, ServerError> {
        let (graph, record) = self.current.graph.inject_node(features, target)?;
        let (working, spent) = match self.defense.as_mut() {
            None => (normalize_adjacency(graph.adjacency()), 0.0),
            Some(d) => {
                let released = lapgraph(graph.adjacency(), &d.config, &mut d.rng)?;
                self.ledger
                    .compose(d.config.epsilon, format!("connect:{}", target.0))?;
                (normalize_adjacency(&released), d.config.epsilon)
            }
        };
        self.current = Version::build(graph, working, &self.model)?;
        self.record("connect", vec![target.0, record.new_node.0], spent);
        Ok(record.new_node)
    }
}

impl Resettable for Server {
    fn reset(&mut self) {
        self.current = self.snapshot.clone();
        self.ledger.truncate(self.snapshot_ledger_len);
    }
}

impl FeatureProbe for Server {
    fn predict_with_shift(
        &self,
        node: NodeId,
        delta: f64,
        ids: &[NodeId],
    ) -> Result<PredictionMatrix, ServerError> {
        if self.is_defended() {
            return Err(ServerError::ProbeUnsupported);
        }
        let idx = self.check_ids(ids)?;
        self.check_ids(&[node])?;
        let g = &self.current.graph;
        let mut x = g.features().clone();
        for v in x.row_mut(node.0) {
            *v += delta;
        }
        let p = forward(&self.model, &self.current.working, &x)?.select(&idx);
        self.record("probe", vec![node.0], 0.0);
        Ok(p)
    }
}
