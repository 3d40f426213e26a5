//! LapGraph: Laplace-perturb every upper-triangle cell of the adjacency
//! matrix, then keep the `Ñ` largest cells as edges, where `Ñ` is itself a
//! Laplace-noised edge count.

use serde::{Deserialize, Serialize};

use super::laplace::sample_unchecked;
use super::DpError;
use crate::graph::Adjacency;
use crate::rng::Rng;

pub const DEFAULT_COUNT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LapGraphConfig {
    /// Budget spent by one application of the mechanism.
    pub epsilon: f64,
    /// Share of `epsilon` spent on the edge count; the rest goes to the cells.
    pub count_fraction: f64,
    /// Rng stream the defended server draws from.
    pub stream: u64,
}

impl LapGraphConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            count_fraction: DEFAULT_COUNT_FRACTION,
            stream: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DpError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(DpError::Epsilon(self.epsilon));
        }
        if !(self.count_fraction > 0.0 && self.count_fraction < 1.0) {
            return Err(DpError::CountFraction(self.count_fraction));
        }
        Ok(())
    }

    /// Laplace scale for the edge count (sensitivity 1).
    pub fn count_scale(&self) -> f64 {
        1.0 / (self.count_fraction * self.epsilon)
    }

    /// Laplace scale for each adjacency cell (sensitivity 1).
    pub fn cell_scale(&self) -> f64 {
        1.0 / ((1.0 - self.count_fraction) * self.epsilon)
    }
}

/// Output of one LapGraph application.
#[derive(Debug, Clone, PartialEq)]
pub struct LapGraphRelease {
    pub adjacency: Adjacency,
    /// The clamped noisy edge count; equals `adjacency.num_edges()`.
    pub estimated_edges: usize,
}

pub fn lapgraph(adj: &Adjacency, cfg: &LapGraphConfig, rng: &mut Rng) -> Result<Adjacency, DpError> {
    lapgraph_release(adj, cfg, rng).map(|r| r.adjacency)
}

pub fn lapgraph_release(
    adj: &Adjacency,
    cfg: &LapGraphConfig,
    rng: &mut Rng,
) -> Result<LapGraphRelease, DpError> {
    cfg.validate()?;
    let n = adj.num_nodes();
    let cells = n * n.saturating_sub(1) / 2;

    let noisy_count = adj.num_edges() as f64 + sample_unchecked(cfg.count_scale(), rng);
    let keep = noisy_count.round().clamp(0.0, cells as f64) as usize;

    let scale = cfg.cell_scale();
    // (value, row-major cell index, u, v)
    let mut scored: Vec<(f64, u32, u32)> = Vec::with_capacity(cells);
    for u in 0..n {
        let nbrs = adj.neighbors(u);
        let mut k = nbrs.partition_point(|&v| v <= u);
        for v in u + 1..n {
            let present = k < nbrs.len() && nbrs[k] == v;
            if present {
                k += 1;
            }
            let value = f64::from(u8::from(present)) + sample_unchecked(scale, rng);
            scored.push((value, u as u32, v as u32));
        }
    }
    // Larger value first; equal values fall back to row-major order, which
    // the (u, v) pair encodes.
    let order = |a: &(f64, u32, u32), b: &(f64, u32, u32)| {
        b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2)))
    };
    if keep > 0 && keep < scored.len() {
        scored.select_nth_unstable_by(keep - 1, order);
    }
    scored.truncate(keep);
    let adjacency = Adjacency::from_edges(n, scored.iter().map(|&(_, u, v)| (u as usize, v as usize)))
        .expect("cells are in range and off-diagonal");
    Ok(LapGraphRelease {
        adjacency,
        estimated_edges: keep,
    })
}
