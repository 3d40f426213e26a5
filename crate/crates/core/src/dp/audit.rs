//! Monte-Carlo lower bounds on the privacy loss of a graph-release mechanism.
//!
//! For a fixed neighbouring pair the mechanism is run `trials` times on each
//! graph. The distinguishing event is "the cell where the pair differs is an
//! edge in the output". Any event frequency ratio bounds `e^ε` from below, so
//! `ln(p/p′)` (taken over the event, its complement and both orders) is an
//! empirical lower bound on ε. Wilson intervals on `p` and `p′` turn the point
//! estimate into an interval.

use super::lapgraph::{lapgraph, LapGraphConfig};
use super::neighbors::{neighbor_pair_generate, NeighborRelation};
use super::DpError;
use crate::graph::{Adjacency, Graph};
use crate::rng::Rng;

pub const MIN_AUDIT_TRIALS: usize = 10_000;

/// Two-sided 99.9% normal quantile used for the Wilson intervals.
pub const WILSON_Z: f64 = 3.290_526_731_491_926;

/// A randomized mechanism releasing an adjacency matrix.
pub trait GraphMechanism {
    fn name(&self) -> String;
    fn release(&self, adj: &Adjacency, rng: &mut Rng) -> Result<Adjacency, DpError>;
}

pub struct LapGraphMechanism(pub LapGraphConfig);

impl GraphMechanism for LapGraphMechanism {
    fn name(&self) -> String {
        "lapgraph".into()
    }

    fn release(&self, adj: &Adjacency, rng: &mut Rng) -> Result<Adjacency, DpError> {
        lapgraph(adj, &self.0, rng)
    }
}

/// Publishes the true adjacency. Not private under any relation.
pub struct IdentityRelease;

impl GraphMechanism for IdentityRelease {
    fn name(&self) -> String {
        "identity".into()
    }

    fn release(&self, adj: &Adjacency, _rng: &mut Rng) -> Result<Adjacency, DpError> {
        Ok(adj.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub mechanism: String,
    pub relation: NeighborRelation,
    pub epsilon_claimed: f64,
    /// Point estimate of the event-based lower bound; infinite when the event
    /// occurs under one graph and never under the other.
    pub epsilon_lower: f64,
    /// Conservative end of the Wilson interval, floored at 0.
    pub ci_low: f64,
    /// Optimistic end of the Wilson interval.
    pub ci_high: f64,
    pub trials: usize,
    pub event_counts: (usize, usize),
    pub unbounded: bool,
}

impl AuditReport {
    pub const CSV_HEADER: &'static str = "mechanism,epsilon_claimed,epsilon_lower,ci_low,ci_high,trials";

    pub fn csv_row(&self) -> String {
        use crate::io::fmt_f64;
        format!(
            "{},{},{},{},{},{}",
            self.mechanism,
            fmt_f64(self.epsilon_claimed),
            fmt_f64(self.epsilon_lower),
            fmt_f64(self.ci_low),
            fmt_f64(self.ci_high),
            self.trials
        )
    }

    /// True when the conservative bound does not exceed the claimed budget.
    pub fn consistent_with_claim(&self) -> bool {
        self.ci_low <= self.epsilon_claimed
    }
}

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Pads the smaller adjacency of a neighbouring pair so both have the same
/// node set, with the extra node in the position it occupies in the larger.
fn align(relation: NeighborRelation, a: &Graph, b: &Graph) -> Result<(Adjacency, Adjacency), DpError> {
    let (aa, ba) = (a.adjacency(), b.adjacency());
    match aa.num_nodes().cmp(&ba.num_nodes()) {
        std::cmp::Ordering::Equal => Ok((aa.clone(), ba.clone())),
        std::cmp::Ordering::Less => Ok((pad_like(relation, aa, ba)?, ba.clone())),
        std::cmp::Ordering::Greater => Ok((aa.clone(), pad_like(relation, ba, aa)?)),
    }
}

fn pad_like(relation: NeighborRelation, small: &Adjacency, large: &Adjacency) -> Result<Adjacency, DpError> {
    // Pairs from the generator put an added node last; removed nodes are
    // re-inserted where they were by trying each slot.
    let n = large.num_nodes();
    for k in (0..n).rev() {
        let perm: Vec<usize> = (0..n)
            .map(|i| match i {
                i if i == n - 1 => k,
                i if i < k => i,
                i => i + 1,
            })
            .collect();
        let padded = small.padded(1).permuted(&perm);
        let differs_only_at_k = large
            .edges()
            .all(|(u, v)| padded.has_edge(u, v) || u == k || v == k)
            && padded.edges().all(|(u, v)| large.has_edge(u, v));
        if differs_only_at_k {
            return Ok(padded);
        }
    }
    Err(DpError::InvalidPair(relation, "cannot align pair".into()))
}

/// Audits `mechanism` on one neighbouring pair drawn from `base`.
pub fn dp_audit(
    mechanism: &dyn GraphMechanism,
    relation: NeighborRelation,
    base: &Graph,
    epsilon_claimed: f64,
    trials: usize,
    rng: &mut Rng,
) -> Result<AuditReport, DpError> {
    if trials < MIN_AUDIT_TRIALS {
        return Err(DpError::TooFewTrials(trials));
    }
    let (g1, g2) = neighbor_pair_generate(relation, base, rng)?;
    let (a1, a2) = align(relation, &g1, &g2)?;
    let (u, v) = a1
        .edges()
        .chain(a2.edges())
        .find(|&(u, v)| a1.has_edge(u, v) != a2.has_edge(u, v))
        .ok_or_else(|| DpError::InvalidPair(relation, "pair does not differ".into()))?;

    let mut count = |adj: &Adjacency| -> Result<usize, DpError> {
        let mut hits = 0;
        for _ in 0..trials {
            if mechanism.release(adj, rng)?.has_edge(u, v) {
                hits += 1;
            }
        }
        Ok(hits)
    };
    let c1 = count(&a1)?;
    let c2 = count(&a2)?;
    if c1 == c2 && (c1 == 0 || c1 == trials) {
        return Err(DpError::DegenerateAudit {
            hits: c1,
            trials,
        });
    }

    let t = trials as f64;
    let (p1, p2) = (c1 as f64 / t, c2 as f64 / t);
    let (lo1, hi1) = wilson_interval(c1, trials, WILSON_Z);
    let (lo2, hi2) = wilson_interval(c2, trials, WILSON_Z);
    // (numerator, denominator) probability pairs with their intervals: the
    // event and its complement, in both orders.
    let ratios = [
        ((p1, lo1, hi1), (p2, lo2, hi2)),
        ((p2, lo2, hi2), (p1, lo1, hi1)),
        ((1.0 - p1, 1.0 - hi1, 1.0 - lo1), (1.0 - p2, 1.0 - hi2, 1.0 - lo2)),
        ((1.0 - p2, 1.0 - hi2, 1.0 - lo2), (1.0 - p1, 1.0 - hi1, 1.0 - lo1)),
    ];
    let ln_ratio = |num: f64, den: f64| -> f64 {
        if num <= 0.0 {
            f64::NEG_INFINITY
        } else if den <= 0.0 {
            f64::INFINITY
        } else {
            (num / den).ln()
        }
    };
    let mut point = f64::NEG_INFINITY;
    let mut low = 0.0f64;
    let mut high = 0.0f64;
    for ((pn, ln_, hn), (pd, ld, hd)) in ratios {
        point = point.max(ln_ratio(pn, pd));
        low = low.max(ln_ratio(ln_, hd));
        high = high.max(ln_ratio(hn, ld));
    }
    let point = point.max(0.0);

    Ok(AuditReport {
        mechanism: mechanism.name(),
        relation,
        epsilon_claimed,
        epsilon_lower: point,
        ci_low: low,
        ci_high: high,
        trials,
        event_counts: (c1, c2),
        unbounded: point.is_infinite(),
    })
}

/// L1 sensitivity of releasing the prediction rows of `num_targets` nodes:
/// each row is a probability vector, so one row can move by at most 2 and a
/// single edge can move all of them.
pub fn output_perturbation_sensitivity(num_targets: usize) -> f64 {
    2.0 * num_targets as f64
}

/// Laplace scale output perturbation would need at budget `epsilon`. Kept
/// as a reference point only: at any useful ε it swamps the `[0, 1]` range
/// of the scores it protects.
pub fn output_perturbation_scale(num_targets: usize, epsilon: f64) -> f64 {
    output_perturbation_sensitivity(num_targets) / epsilon
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::rng;

    fn base() -> Graph {
        let adj = Adjacency::from_edges(
            8,
            [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (0, 4), (2, 6)],
        )
        .unwrap();
        Graph::unlabeled(adj, Matrix::zeros(8, 1)).unwrap()
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo0, hi0) = wilson_interval(0, 10_000, WILSON_Z);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0 && hi0 < 0.01);
    }

    #[test]
    fn identity_release_is_flagged_unbounded() {
        let mut r = rng::seeded(1);
        let rep = dp_audit(
            &IdentityRelease,
            NeighborRelation::OneNodeOneEdge,
            &base(),
            1.0,
            MIN_AUDIT_TRIALS,
            &mut r,
        )
        .unwrap();
        assert!(rep.unbounded);
        assert!(rep.epsilon_lower.is_infinite());
        assert!(rep.ci_low > 1.0, "conservative bound {}", rep.ci_low);
        assert!(!rep.consistent_with_claim());
    }

    #[test]
    fn lapgraph_at_unit_epsilon_respects_claim() {
        let mut r = rng::seeded(2);
        let mech = LapGraphMechanism(LapGraphConfig::new(1.0));
        let rep = dp_audit(&mech, NeighborRelation::OneNodeOneEdge, &base(), 1.0, 20_000, &mut r)
            .unwrap();
        assert!(!rep.unbounded);
        assert!(rep.consistent_with_claim(), "{rep:?}");
    }

    #[test]
    fn tiny_epsilon_gives_bound_near_zero() {
        let mut r = rng::seeded(3);
        let mech = LapGraphMechanism(LapGraphConfig::new(0.01));
        let rep = dp_audit(&mech, NeighborRelation::OneNodeOneEdge, &base(), 0.01, 20_000, &mut r)
            .unwrap();
        assert!(rep.ci_low <= 0.01);
        assert!(rep.epsilon_lower < 0.1, "{rep:?}");
    }

    #[test]
    fn too_few_trials() {
        let mut r = rng::seeded(0);
        assert_eq!(
            dp_audit(&IdentityRelease, NeighborRelation::EdgeLevel, &base(), 1.0, 10, &mut r)
                .unwrap_err(),
            DpError::TooFewTrials(10)
        );
    }

    #[test]
    fn output_perturbation_noise_dwarfs_scores() {
        assert_eq!(output_perturbation_sensitivity(50), 100.0);
        assert!(output_perturbation_scale(50, 10.0) >= 10.0);
    }

    #[test]
    fn csv_row_format() {
        let rep = AuditReport {
            mechanism: "lapgraph".into(),
            relation: NeighborRelation::EdgeLevel,
            epsilon_claimed: 1.0,
            epsilon_lower: 0.25,
            ci_low: 0.0,
            ci_high: 0.5,
            trials: 100_000,
            event_counts: (1, 2),
            unbounded: false,
        };
        assert_eq!(rep.csv_row(), "lapgraph,1,0.25,0,0.5,100000");
    }
}
