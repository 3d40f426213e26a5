#![allow(dead_code)]

use nils::gcn::{loss_and_gradients, GcnModel};
use nils::generate::erdos_renyi;
use nils::graph::{normalize_adjacency, NormalizedAdjacency};
use nils::linalg::Matrix;
use nils::rng;
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-5;
/// Pre-activations closer than this to 0 make central differences straddle
/// the ReLU kink; such instances are redrawn.
pub const KINK_MARGIN: f64 = 1e-4;

pub struct TinyInstance {
    pub model: GcnModel,
    pub adj: NormalizedAdjacency,
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub mask: Vec<usize>,
    pub l2: f64,
}

fn random_matrix(rows: usize, cols: usize, r: &mut rng::Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect())
}

/// n = 4, d = 3, c = 2, two layers with hidden width 3. `None` if some hidden
/// pre-activation sits within the kink margin.
pub fn tiny_instance(seed: u64) -> Option<TinyInstance> {
    let mut r = rng::seeded(seed);
    let (n, d, h, c) = (4, 3, 3, 2);
    let adj = normalize_adjacency(&erdos_renyi(n, 0.5, &mut r));
    let x = random_matrix(n, d, &mut r);
    let w1 = random_matrix(d, h, &mut r);
    let w2 = random_matrix(h, c, &mut r);
    let pre = adj.spmm(&x.matmul(&w1));
    if pre.as_slice().iter().any(|v| v.abs() < KINK_MARGIN) {
        return None;
    }
    let labels = (0..n).map(|_| r.random_range(0..c)).collect();
    Some(TinyInstance {
        model: GcnModel::new(vec![w1, w2]).unwrap(),
        adj,
        x,
        labels,
        mask: (0..n).collect(),
        l2: 0.01,
    })
}

/// First `count` accepted instances from consecutive seeds.
pub fn tiny_instances(count: usize) -> Vec<TinyInstance> {
    (0..).filter_map(tiny_instance).take(count).collect()
}

/// Largest `|a - n| / max(|a|, |n|, 1e-7)` over all weights, comparing the
/// analytic gradient `a` with a central difference `n`.
pub fn max_relative_error(t: &TinyInstance) -> f64 {
    let loss = |m: &GcnModel| loss_and_gradients(m, &t.adj, &t.x, &t.labels, &t.mask, t.l2).unwrap();
    let (_, grads) = loss(&t.model);
    let mut worst: f64 = 0.0;
    for (l, g) in grads.iter().enumerate() {
        for k in 0..g.as_slice().len() {
            let mut plus = t.model.clone();
            plus.layers_mut()[l].as_mut_slice()[k] += FD_STEP;
            let mut minus = t.model.clone();
            minus.layers_mut()[l].as_mut_slice()[k] -= FD_STEP;
            let numeric = (loss(&plus).0 - loss(&minus).0) / (2.0 * FD_STEP);
            let analytic = g.as_slice()[k];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(err);
        }
    }
    worst
}
