//! Graph convolutional network: `H⁽⁰⁾ = X`, `H⁽ˡ⁺¹⁾ = σ(Â H⁽ˡ⁾ W⁽ˡ⁾)`, with
//! ReLU on hidden layers and a row softmax on the last one.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NormalizedAdjacency};
use crate::io::fmt_f64;
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum GcnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("graph has no labels")]
    MissingLabels,
    #[error("training mask is empty")]
    EmptyMask,
    #[error("node {0} in mask is out of range")]
    MaskRange(usize),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    layers: Vec<Matrix>,
    activation: Activation,
}

impl GcnModel {
    /// Wraps weight matrices, checking that consecutive shapes chain.
    pub fn new(layers: Vec<Matrix>) -> Result<Self, GcnError> {
        if layers.is_empty() {
            return Err(GcnError::Shape("model needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(GcnError::Shape(format!(
                    "layer {l} outputs {} units but layer {} expects {}",
                    pair[0].cols(),
                    l + 1,
                    pair[1].rows()
                )));
            }
        }
        Ok(Self {
            layers,
            activation: Activation::Relu,
        })
    }

    /// Seeded uniform init in `[-s, s]`, `s = scale / sqrt(d_l)`.
    pub fn init(dims: &[usize], scale: f64, seed: u64) -> Result<Self, GcnError> {
        if dims.len() < 2 {
            return Err(GcnError::Shape("need input and output widths".into()));
        }
        let mut rng = rng::seeded(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = scale / (w[0].max(1) as f64).sqrt();
                let data = (0..w[0] * w[1])
                    .map(|_| {
                        if bound > 0.0 {
                            rng.random_range(-bound..=bound)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Matrix::from_vec(w[0], w[1], data)
            })
            .collect();
        Self::new(layers)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Matrix] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Layer widths `d_0, …, d_L`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].rows())
            .chain(self.layers.iter().map(Matrix::cols))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].cols()
    }

    /// Text form: a header `gcn <L> <d_0> ... <d_L>` followed by each weight
    /// matrix row by row, values comma-separated.
    pub fn to_text(&self) -> String {
        let dims: Vec<String> = self.dims().iter().map(usize::to_string).collect();
        let mut out = format!("gcn {} {}\n", self.depth(), dims.join(" "));
        for w in &self.layers {
            for row in w.iter_rows() {
                let vals: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
                out.push_str(&vals.join(","));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GcnError> {
        let perr = |line: usize, message: String| GcnError::Parse { line, message };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.first() != Some(&"gcn") {
            return Err(perr(1, "missing `gcn` header".into()));
        }
        let nums = toks[1..]
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| perr(1, e.to_string()))?;
        let depth = *nums.first().ok_or_else(|| perr(1, "missing layer count".into()))?;
        let dims = &nums[1..];
        if depth == 0 || dims.len() != depth + 1 {
            return Err(perr(1, format!("expected {} widths", depth + 1)));
        }
        let mut layers = Vec::with_capacity(depth);
        for w in dims.windows(2) {
            let mut data = Vec::with_capacity(w[0] * w[1]);
            for _ in 0..w[0] {
                let (i, line) = lines
                    .next()
                    .ok_or_else(|| perr(0, "unexpected end of file".into()))?;
                let row = if w[1] == 0 {
                    Vec::new()
                } else {
                    line.split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| perr(i + 1, e.to_string()))?
                };
                if row.len() != w[1] {
                    return Err(perr(i + 1, format!("expected {} values", w[1])));
                }
                data.extend(row);
            }
            layers.push(Matrix::from_vec(w[0], w[1], data));
        }
        if let Some((i, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(perr(i + 1, format!("trailing content {extra:?}")));
        }
        Self::new(layers)
    }
}

/// Softmax class scores, one row per queried node.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix(Matrix);

impl PredictionMatrix {
    pub fn from_matrix(m: Matrix) -> Self {
        Self(m)
    }

    pub fn num_rows(&self) -> usize {
        self.0.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn select(&self, idx: &[usize]) -> PredictionMatrix {
        PredictionMatrix(self.0.select_rows(idx))
    }

    /// Argmax class of each row.
    pub fn predicted_classes(&self) -> Vec<usize> {
        self.0.iter_rows().map(crate::linalg::argmax).collect()
    }
}

/// Row softmax with max subtraction.
pub fn softmax_rows(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

/// `log Σ exp(row)`, stabilized.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub(crate) struct ForwardCache {
    /// Layer inputs `H⁽ˡ⁾`, `l = 0..L`.
    pub inputs: Vec<Matrix>,
    /// Pre-activations `Z⁽ˡ⁾ = Â H⁽ˡ⁾ W⁽ˡ⁾`.
    pub pre: Vec<Matrix>,
}

fn check_shapes(model: &GcnModel, adj: &NormalizedAdjacency, x: &Matrix) -> Result<(), GcnError> {
    if x.cols() != model.input_dim() {
        return Err(GcnError::Shape(format!(
            "features have {} columns, model expects {}",
            x.cols(),
            model.input_dim()
        )));
    }
    if adj.dim() != x.rows() {
        return Err(GcnError::Shape(format!(
            "adjacency is {0}x{0} but there are {1} feature rows",
            adj.dim(),
            x.rows()
        )));
    }
    Ok(())
}

pub(crate) fn forward_cached(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    x: &Matrix,
) -> Result<ForwardCache, GcnError> {
    check_shapes(model, adj, x)?;
    let mut inputs = vec![x.clone()];
    let mut pre = Vec::with_capacity(model.depth());
    for (l, w) in model.layers.iter().enumerate() {
        let z = adj.spmm(&inputs[l].matmul(w));
        if l + 1 < model.depth() {
            inputs.push(z.map(|v| v.max(0.0)));
        }
        pre.push(z);
    }
    Ok(ForwardCache { inputs, pre })
}

/// Full forward pass; one prediction row per node of `x`.
pub fn forward(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    x: &Matrix,
) -> Result<PredictionMatrix, GcnError> {
    let cache = forward_cached(model, adj, x)?;
    let logits = cache.pre.last().expect("at least one layer");
    Ok(PredictionMatrix(softmax_rows(logits)))
}

/// Gradient-descent hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_init_scale: f64,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.2,
            epochs: 200,
            weight_init_scale: 1.0,
            seed: 0,
            l2: 5e-4,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), GcnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GcnError::Config("learning_rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(GcnError::Config("l2 must be non-negative".into()));
        }
        if !(self.weight_init_scale >= 0.0 && self.weight_init_scale.is_finite()) {
            return Err(GcnError::Config("weight_init_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// Masked mean cross-entropy plus `l2/2 · Σ‖W‖²`, and its exact gradient with
/// respect to every weight matrix.
pub fn loss_and_gradients(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    x: &Matrix,
    labels: &[usize],
    mask: &[usize],
    l2: f64,
) -> Result<(f64, Vec<Matrix>), GcnError> {
    if labels.len() != x.rows() {
        return Err(GcnError::Shape(format!(
            "{} labels for {} nodes",
            labels.len(),
            x.rows()
        )));
    }
    if mask.is_empty() {
        return Err(GcnError::EmptyMask);
    }
    if let Some(&bad) = mask.iter().find(|&&i| i >= x.rows()) {
        return Err(GcnError::MaskRange(bad));
    }
    let c = model.num_classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(GcnError::Shape(format!("label {bad} >= class count {c}")));
    }

    let cache = forward_cached(model, adj, x)?;
    let logits = cache.pre.last().expect("at least one layer");
    let probs = softmax_rows(logits);
    let m = mask.len() as f64;

    let mut loss = 0.0;
    let mut grad_z = Matrix::zeros(x.rows(), c);
    for &i in mask {
        let y = labels[i];
        loss += log_sum_exp(logits.row(i)) - logits[(i, y)];
        let g = grad_z.row_mut(i);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk += probs[(i, k)] / m;
        }
        g[y] -= 1.0 / m;
    }
    loss /= m;
    loss += 0.5 * l2 * model.layers.iter().map(Matrix::sum_squares).sum::<f64>();

    let depth = model.depth();
    let mut grads = vec![Matrix::zeros(0, 0); depth];
    for l in (0..depth).rev() {
        // Â is symmetric, so Âᵀ dZ = Â dZ.
        let grad_t = adj.spmm(&grad_z);
        let mut gw = cache.inputs[l].t_matmul(&grad_t);
        gw.axpy(l2, &model.layers[l]);
        grads[l] = gw;
        if l > 0 {
            let grad_h = grad_t.matmul_t(&model.layers[l]);
            let z_prev = &cache.pre[l - 1];
            let mut gz = grad_h;
            for (g, &z) in gz.as_mut_slice().iter_mut().zip(z_prev.as_slice()) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
            grad_z = gz;
        }
    }
    Ok((loss, grads))
}

/// Trains a GCN of the given depth with full-batch gradient descent.
///
/// `hidden_dims` must have `depth - 1` entries. Deterministic in `cfg.seed`.
pub fn train(
    g: &Graph,
    depth: usize,
    hidden_dims: &[usize],
    cfg: &TrainConfig,
    train_mask: &[usize],
) -> Result<GcnModel, GcnError> {
    cfg.validate()?;
    let labels = g.labels().ok_or(GcnError::MissingLabels)?;
    if train_mask.is_empty() {
        return Err(GcnError::EmptyMask);
    }
    if depth == 0 || hidden_dims.len() + 1 != depth {
        return Err(GcnError::Shape(format!(
            "depth {depth} needs {} hidden widths, got {}",
            depth.saturating_sub(1),
            hidden_dims.len()
        )));
    }
    let mut dims = vec![g.feature_dim()];
    dims.extend_from_slice(hidden_dims);
    dims.push(g.num_classes());
    let mut model = GcnModel::init(&dims, cfg.weight_init_scale, cfg.seed)?;
    let adj = crate::graph::normalize_adjacency(g.adjacency());
    for _ in 0..cfg.epochs {
        let (_, grads) =
            loss_and_gradients(&model, &adj, g.features(), labels, train_mask, cfg.l2)?;
        for (w, gw) in model.layers.iter_mut().zip(&grads) {
            w.axpy(-cfg.learning_rate, gw);
        }
    }
    Ok(model)
}

/// Fraction of `mask` nodes whose argmax prediction equals the label.
pub fn accuracy(p: &PredictionMatrix, labels: &[usize], mask: &[usize]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let pred = p.predicted_classes();
    mask.iter().filter(|&&i| pred[i] == labels[i]).count() as f64 / mask.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_sbm, FeatureSpec, SbmSpec};
    use crate::graph::{normalize_adjacency, Adjacency};

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let adj = normalize_adjacency(&Adjacency::empty(1));
        let model = GcnModel::new(vec![Matrix::identity(2)]).unwrap();
        let p = forward(&model, &adj, &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let adj = normalize_adjacency(&Adjacency::empty(2));
        let model = GcnModel::new(vec![Matrix::identity(2)]).unwrap();
        assert!(matches!(
            forward(&model, &adj, &Matrix::zeros(2, 3)),
            Err(GcnError::Shape(_))
        ));
        assert!(matches!(
            forward(&model, &adj, &Matrix::zeros(3, 2)),
            Err(GcnError::Shape(_))
        ));
    }

    #[test]
    fn model_shapes_must_chain() {
        assert!(GcnModel::new(vec![Matrix::zeros(2, 3), Matrix::zeros(4, 2)]).is_err());
        assert!(GcnModel::new(vec![]).is_err());
        let m = GcnModel::new(vec![Matrix::zeros(2, 3), Matrix::zeros(3, 2)]).unwrap();
        assert_eq!(m.dims(), vec![2, 3, 2]);
    }

    #[test]
    fn equal_logits_give_ln2_loss() {
        let adj = normalize_adjacency(&Adjacency::from_edges(2, [(0, 1)]).unwrap());
        let model = GcnModel::new(vec![Matrix::zeros(3, 2)]).unwrap();
        let x = Matrix::filled(2, 3, 0.7);
        let (loss, grads) = loss_and_gradients(&model, &adj, &x, &[0, 1], &[0, 1], 0.0).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(grads.len(), 1);
    }

    #[test]
    fn zero_last_layer_gives_uniform_and_no_l2_gradient_there() {
        let adj = normalize_adjacency(&Adjacency::from_edges(3, [(0, 1), (1, 2)]).unwrap());
        let w0 = Matrix::from_rows(&[[0.3, -0.2], [0.1, 0.4]]).unwrap();
        let model = GcnModel::new(vec![w0, Matrix::zeros(2, 3)]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let p = forward(&model, &adj, &x).unwrap();
        for i in 0..3 {
            for &v in p.row(i) {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        // With l2 > 0 the L2 contribution l2 * W is zero for a zero matrix, so
        // the last-layer gradient is the same with and without it.
        let (_, g0) = loss_and_gradients(&model, &adj, &x, &[0, 1, 2], &[0, 2], 0.0).unwrap();
        let (_, g1) = loss_and_gradients(&model, &adj, &x, &[0, 1, 2], &[0, 2], 0.3).unwrap();
        assert_eq!(g0[1], g1[1]);
    }

    #[test]
    fn loss_gradient_errors() {
        let adj = normalize_adjacency(&Adjacency::empty(2));
        let model = GcnModel::new(vec![Matrix::zeros(1, 2)]).unwrap();
        let x = Matrix::zeros(2, 1);
        assert_eq!(
            loss_and_gradients(&model, &adj, &x, &[0, 1], &[], 0.0).unwrap_err(),
            GcnError::EmptyMask
        );
        assert!(loss_and_gradients(&model, &adj, &x, &[0], &[0], 0.0).is_err());
        assert!(loss_and_gradients(&model, &adj, &x, &[0, 5], &[0], 0.0).is_err());
    }

    fn sbm100() -> Graph {
        generate_sbm(
            11,
            &SbmSpec {
                block_sizes: vec![50, 50],
                p_in: 0.1,
                p_out: 0.01,
                features: FeatureSpec::default(),
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_returns_seeded_init() {
        let g = sbm100();
        let cfg = TrainConfig {
            epochs: 0,
            seed: 9,
            ..TrainConfig::default()
        };
        let m = train(&g, 2, &[16], &cfg, &[0, 1, 2]).unwrap();
        let init = GcnModel::init(&[16, 16, 2], cfg.weight_init_scale, 9).unwrap();
        assert_eq!(m, init);
    }

    #[test]
    fn training_separates_sbm_classes() {
        let g = sbm100();
        let adj = normalize_adjacency(g.adjacency());
        let mask: Vec<usize> = (0..100).collect();
        let cfg = TrainConfig::default();
        let m = train(&g, 2, &[16], &cfg, &mask).unwrap();
        let p = forward(&m, &adj, g.features()).unwrap();
        let acc = accuracy(&p, g.labels().unwrap(), &mask);
        assert!(acc >= 0.9, "train accuracy {acc}");
    }

    #[test]
    fn loss_decreases_at_small_learning_rate() {
        let g = sbm100();
        let adj = normalize_adjacency(g.adjacency());
        let mask: Vec<usize> = (0..100).step_by(2).collect();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            epochs: 200,
            ..TrainConfig::default()
        };
        let labels = g.labels().unwrap();
        let init = train(&g, 2, &[16], &TrainConfig { epochs: 0, ..cfg.clone() }, &mask)
            .unwrap();
        let trained = train(&g, 2, &[16], &cfg, &mask).unwrap();
        let (l0, _) = loss_and_gradients(&init, &adj, g.features(), labels, &mask, cfg.l2).unwrap();
        let (l1, _) =
            loss_and_gradients(&trained, &adj, g.features(), labels, &mask, cfg.l2).unwrap();
        assert!(l1 < l0, "loss went from {l0} to {l1}");
    }

    #[test]
    fn train_errors() {
        let g = sbm100();
        let cfg = TrainConfig::default();
        assert_eq!(train(&g, 2, &[16], &cfg, &[]).unwrap_err(), GcnError::EmptyMask);
        assert!(train(&g, 3, &[16], &cfg, &[0]).is_err());
        let unlabeled = Graph::unlabeled(g.adjacency().clone(), g.features().clone()).unwrap();
        assert_eq!(
            train(&unlabeled, 2, &[16], &cfg, &[0]).unwrap_err(),
            GcnError::MissingLabels
        );
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..cfg
        };
        assert!(matches!(train(&g, 2, &[16], &bad, &[0]), Err(GcnError::Config(_))));
    }

    #[test]
    fn model_text_round_trips_exactly() {
        let m = GcnModel::init(&[5, 4, 3, 2], 1.3, 77).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("gcn 3 5 4 3 2\n"));
        assert_eq!(GcnModel::from_text(&text).unwrap(), m);
    }

    #[test]
    fn model_text_errors() {
        assert!(GcnModel::from_text("").is_err());
        assert!(GcnModel::from_text("gnn 1 1 1\n0\n").is_err());
        assert!(GcnModel::from_text("gcn 1 2 1\n0\n").is_err());
        assert!(GcnModel::from_text("gcn 1 1 2\n0,x\n").is_err());
        assert!(GcnModel::from_text("gcn 1 1 1\n0\n5\n").is_err());
    }
}
