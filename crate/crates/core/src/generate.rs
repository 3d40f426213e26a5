//! Synthetic graph generators: stochastic block models with class-dependent
//! features, and Erdős–Rényi graphs for property tests.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Adjacency, Graph};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("block list is empty or contains an empty block")]
    EmptyBlock,
    #[error("need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")]
    Probabilities { p_in: f64, p_out: f64 },
    #[error("invalid feature spec: {0}")]
    Features(String),
}

/// How node features depend on the class. Coordinate `k` is "owned" by class
/// `k % classes`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureModel {
    /// `signal` on owned coordinates plus `noise * N(0, 1)` everywhere.
    Gaussian { signal: f64, noise: f64 },
    /// Sparse 0/1 attributes: owned coordinates are set with probability `on`,
    /// the others with probability `off`.
    Binary { on: f64, off: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub dim: usize,
    pub model: FeatureModel,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            dim: 16,
            model: FeatureModel::Gaussian {
                signal: 1.0,
                noise: 0.5,
            },
        }
    }
}

impl FeatureSpec {
    pub fn binary(dim: usize, on: f64, off: f64) -> Self {
        Self {
            dim,
            model: FeatureModel::Binary { on, off },
        }
    }

    fn validate(&self) -> Result<(), GenerateError> {
        let ok = match self.model {
            FeatureModel::Gaussian { signal, noise } => signal.is_finite() && noise >= 0.0 && noise.is_finite(),
            FeatureModel::Binary { on, off } => (0.0..=1.0).contains(&on) && (0.0..=1.0).contains(&off),
        };
        if ok {
            Ok(())
        } else {
            Err(GenerateError::Features(format!("{:?}", self.model)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub features: FeatureSpec,
}

pub fn generate_sbm(seed: u64, spec: &SbmSpec) -> Result<Graph, GenerateError> {
    if spec.block_sizes.is_empty() || spec.block_sizes.contains(&0) {
        return Err(GenerateError::EmptyBlock);
    }
    let (p_in, p_out) = (spec.p_in, spec.p_out);
    if !(0.0 <= p_out && p_out < p_in && p_in <= 1.0) {
        return Err(GenerateError::Probabilities { p_in, p_out });
    }
    let fs = &spec.features;
    fs.validate()?;

    let labels: Vec<usize> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = labels.len();
    let classes = spec.block_sizes.len();

    let mut rng = rng::stream(seed, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let adjacency = Adjacency::from_edges(n, edges).expect("generated edges are valid");

    let mut frng = rng::stream(seed, 1);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Matrix::zeros(n, fs.dim);
    for (i, &c) in labels.iter().enumerate() {
        for (k, x) in features.row_mut(i).iter_mut().enumerate() {
            let owned = k % classes == c;
            *x = match fs.model {
                FeatureModel::Gaussian { signal, noise } => {
                    let mean = if owned { signal } else { 0.0 };
                    mean + noise * normal.sample(&mut frng)
                }
                FeatureModel::Binary { on, off } => {
                    let p = if owned { on } else { off };
                    if frng.random_bool(p) { 1.0 } else { 0.0 }
                }
            };
        }
    }

    Ok(Graph::new(adjacency, features, Some(labels), classes).expect("labels in range"))
}

/// G(n, p) adjacency.
pub fn erdos_renyi(n: usize, p: f64, rng: &mut rng::Rng) -> Adjacency {
    let p = p.clamp(0.0, 1.0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Adjacency::from_edges(n, edges).expect("generated edges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(blocks: Vec<usize>, p_in: f64, p_out: f64) -> SbmSpec {
        SbmSpec {
            block_sizes: blocks,
            p_in,
            p_out,
            features: FeatureSpec::default(),
        }
    }

    #[test]
    fn two_disjoint_triangles() {
        let g = generate_sbm(1, &spec(vec![3, 3], 1.0, 0.0)).unwrap();
        let edges: Vec<_> = g.adjacency().edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
        assert_eq!(g.labels().unwrap(), &[0, 0, 0, 1, 1, 1]);
        assert_eq!(g.num_classes(), 2);
    }

    #[test]
    fn deterministic_under_seed() {
        let s = spec(vec![50, 50], 0.2, 0.01);
        assert_eq!(generate_sbm(42, &s).unwrap(), generate_sbm(42, &s).unwrap());
        assert_ne!(generate_sbm(42, &s).unwrap(), generate_sbm(43, &s).unwrap());
    }

    #[test]
    fn intra_block_density_close_to_p_in() {
        let g = generate_sbm(3, &spec(vec![100, 100], 0.1, 0.01)).unwrap();
        let labels = g.labels().unwrap();
        let (mut intra, mut inter) = (0usize, 0usize);
        for (u, v) in g.adjacency().edges() {
            if labels[u] == labels[v] {
                intra += 1;
            } else {
                inter += 1;
            }
        }
        let intra_pairs = 2.0 * (100.0 * 99.0 / 2.0);
        let inter_pairs = 100.0 * 100.0;
        assert!((intra as f64 / intra_pairs - 0.1).abs() <= 0.02);
        assert!((inter as f64 / inter_pairs - 0.01).abs() <= 0.01);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            generate_sbm(0, &spec(vec![3, 0], 0.5, 0.1)).unwrap_err(),
            GenerateError::EmptyBlock
        );
        assert_eq!(
            generate_sbm(0, &spec(vec![], 0.5, 0.1)).unwrap_err(),
            GenerateError::EmptyBlock
        );
        assert!(generate_sbm(0, &spec(vec![3], 0.1, 0.1)).is_err());
        assert!(generate_sbm(0, &spec(vec![3], 1.1, 0.1)).is_err());
    }

    #[test]
    fn binary_features_have_class_rates() {
        let mut s = spec(vec![200, 200], 0.1, 0.01);
        s.features = FeatureSpec::binary(20, 0.3, 0.05);
        let g = generate_sbm(5, &s).unwrap();
        let labels = g.labels().unwrap();
        let (mut owned, mut other) = ((0.0, 0.0), (0.0, 0.0));
        for (i, &c) in labels.iter().enumerate() {
            for (k, &x) in g.features().row(i).iter().enumerate() {
                assert!(x == 0.0 || x == 1.0);
                let slot = if k % 2 == c { &mut owned } else { &mut other };
                slot.0 += x;
                slot.1 += 1.0;
            }
        }
        // 4000 draws per group; 4 sigma is under 0.03
        assert!((owned.0 / owned.1 - 0.3).abs() < 0.03);
        assert!((other.0 / other.1 - 0.05).abs() < 0.015);
        s.features = FeatureSpec::binary(4, 1.5, 0.0);
        assert!(matches!(generate_sbm(0, &s), Err(GenerateError::Features(_))));
    }

    #[test]
    fn degree_statistics_match_expectation_over_seeds() {
        // Expected degree in block b: (size_b - 1) p_in + (n - size_b) p_out.
        // Mean degree over 100 seeds must sit within 3 sigma of it.
        let s = spec(vec![40, 60], 0.15, 0.02);
        let n = 100.0;
        let expected = (40.0 * (39.0 * 0.15 + 60.0 * 0.02) + 60.0 * (59.0 * 0.15 + 40.0 * 0.02)) / n;
        // mean degree = 2m/n with Var(m) the sum of per-pair Bernoulli variances.
        let var_m = (780.0 + 1770.0) * 0.15 * 0.85 + 2400.0 * 0.02 * 0.98;
        let sd_one = 2.0 * f64::sqrt(var_m) / n;
        let seeds = 100;
        let mean: f64 = (0..seeds)
            .map(|s_| {
                let g = generate_sbm(s_, &s).unwrap();
                2.0 * g.num_edges() as f64 / n
            })
            .sum::<f64>()
            / seeds as f64;
        let sd_mean = sd_one / (seeds as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * sd_mean,
            "mean degree {mean} vs expected {expected} (sd {sd_mean})"
        );
    }
}
