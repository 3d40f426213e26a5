//! Target-set sampling and the train/held-out split.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};

use super::HarnessError;
use crate::graph::{Adjacency, NodeId};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingRegime {
    Uniform,
    /// Nodes in the bottom degree tercile.
    LowDegree,
    /// Nodes in the top degree tercile.
    HighDegree,
}

impl fmt::Display for SamplingRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingRegime::Uniform => "uniform",
            SamplingRegime::LowDegree => "low_degree",
            SamplingRegime::HighDegree => "high_degree",
        })
    }
}

impl FromStr for SamplingRegime {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "uniform" => Ok(SamplingRegime::Uniform),
            "low_degree" => Ok(SamplingRegime::LowDegree),
            "high_degree" => Ok(SamplingRegime::HighDegree),
            other => Err(HarnessError::Spec(format!("unknown sampling regime {other:?}"))),
        }
    }
}

/// Degree cutoffs `(low, high)`: the degrees at sorted positions
/// `floor((n-1)/3)` and `ceil(2(n-1)/3)`.
pub fn tercile_cutoffs(adj: &Adjacency) -> Option<(usize, usize)> {
    let n = adj.num_nodes();
    if n == 0 {
        return None;
    }
    let mut d = adj.degrees();
    d.sort_unstable();
    Some((d[(n - 1) / 3], d[(2 * (n - 1)).div_ceil(3)]))
}

/// Eligible nodes for `regime`, ascending.
pub fn eligible(adj: &Adjacency, regime: SamplingRegime) -> Vec<usize> {
    let Some((lo, hi)) = tercile_cutoffs(adj) else {
        return Vec::new();
    };
    (0..adj.num_nodes())
        .filter(|&i| match regime {
            SamplingRegime::Uniform => true,
            SamplingRegime::LowDegree => adj.degree(i) <= lo,
            SamplingRegime::HighDegree => adj.degree(i) >= hi,
        })
        .collect()
}

/// Random split of `0..n` into (train, held-out), both ascending. The train
/// side gets `round(n * fraction)` nodes, kept within `1..n`.
pub fn split_nodes(n: usize, fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>), HarnessError> {
    if n < 2 {
        return Err(HarnessError::EmptyHoldout);
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let n_train = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut train = perm[..n_train].to_vec();
    let mut heldout = perm[n_train..].to_vec();
    train.sort_unstable();
    heldout.sort_unstable();
    Ok((train, heldout))
}

/// `size` distinct nodes drawn uniformly from the regime's pool, ascending.
pub fn sample_targets(
    adj: &Adjacency,
    regime: SamplingRegime,
    size: usize,
    rng: &mut Rng,
) -> Result<Vec<NodeId>, HarnessError> {
    let pool = eligible(adj, regime);
    if size > pool.len() {
        return Err(HarnessError::PoolTooSmall {
            size,
            pool: pool.len(),
        });
    }
    let mut out: Vec<NodeId> = index::sample(rng, pool.len(), size)
        .into_iter()
        .map(|i| NodeId(pool[i]))
        .collect();
    out.sort();
    Ok(out)
}
