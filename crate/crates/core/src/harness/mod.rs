//! Experiment plumbing: target sampling, sweep specs, the sweep runner and
//! its CSV outputs.

pub mod sampling;
pub mod spec;
pub mod sweep;

use thiserror::Error;

use crate::attack::AttackError;
use crate::baselines::BaselineError;
use crate::dp::DpError;
use crate::gcn::{forward, GcnError, GcnModel};
use crate::generate::GenerateError;
use crate::graph::{normalize_adjacency, Graph};
use crate::io::IoError;
use crate::metrics::macro_f1;
use crate::server::ServerError;

pub use sampling::{sample_targets, split_nodes, SamplingRegime};
pub use spec::{Baseline, GraphSource, SweepSpec, ThresholdMode};
pub use sweep::{run_sweep, verify_dir, SweepOptions, SweepResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("spec: {0}")]
    Spec(String),
    #[error("cannot sample {size} targets from a pool of {pool}")]
    PoolTooSmall { size: usize, pool: usize },
    #[error("held-out set is empty")]
    EmptyHoldout,
    #[error("graph has no labels")]
    MissingLabels,
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("{0}")]
    Output(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Gcn(#[from] GcnError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Dp(#[from] DpError),
}

/// Macro-F1 of `model` on the held-out nodes of `g`.
pub fn utility_eval(g: &Graph, model: &GcnModel, heldout: &[usize]) -> Result<f64, HarnessError> {
    if heldout.is_empty() {
        return Err(HarnessError::EmptyHoldout);
    }
    let labels = g.labels().ok_or(HarnessError::MissingLabels)?;
    let p = forward(model, &normalize_adjacency(g.adjacency()), g.features())?;
    let pred = p.predicted_classes();
    let sel = |v: &[usize]| heldout.iter().map(|&i| v[i]).collect::<Vec<_>>();
    Ok(macro_f1(&sel(&pred), &sel(labels), g.num_classes()))
}
