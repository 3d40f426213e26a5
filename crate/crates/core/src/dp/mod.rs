//! Edge-privacy machinery: the Laplace mechanism, LapGraph, neighbouring
//! relations with their adjacency sensitivity, budget composition, and an
//! empirical audit.

pub mod audit;
pub mod lapgraph;
pub mod laplace;
pub mod ledger;
pub mod neighbors;

use thiserror::Error;

use crate::graph::GraphError;

pub use audit::{dp_audit, AuditReport, GraphMechanism, IdentityRelease, LapGraphMechanism};
pub use lapgraph::{lapgraph, lapgraph_release, LapGraphConfig, LapGraphRelease};
pub use laplace::{laplace_cdf, laplace_sample};
pub use ledger::{BudgetLedger, LedgerEntry};
pub use neighbors::{global_sensitivity_l1, neighbor_pair_at, neighbor_pair_generate, NeighborRelation};

#[derive(Debug, Error, PartialEq)]
pub enum DpError {
    #[error("Laplace scale must be positive and finite, got {0}")]
    Scale(f64),
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("count_fraction must lie in (0, 1), got {0}")]
    CountFraction(f64),
    #[error("graph has no {0:?} neighbour")]
    NoNeighbor(NeighborRelation),
    #[error("neighbour choice {choice} out of range ({count} available)")]
    Choice { choice: usize, count: usize },
    #[error("pair is not {0:?}-adjacent: {1}")]
    InvalidPair(NeighborRelation, String),
    #[error("audit needs at least {min} trials, got {0}", min = audit::MIN_AUDIT_TRIALS)]
    TooFewTrials(usize),
    #[error("degenerate audit: event hit {hits}/{trials} times under both graphs")]
    DegenerateAudit { hits: usize, trials: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Privacy parameters `(ε, δ)`; every mechanism here is pure, δ = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, DpError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(DpError::Epsilon(epsilon));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(DpError::Epsilon(delta));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self, DpError> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}
