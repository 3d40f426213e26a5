//! Sweep spec files: flat `key = value` lines, `#` comments.
//!
//! ```text
//! graph.blocks = 150, 150
//! graph.p_in = 0.1
//! model.depths = 2, 4
//! attack.strategies = all_ones, all_zeros
//! dp.epsilons = none, 0.5, 10
//! seeds = 1, 2, 3
//! ```
//!
//! Keys not listed in [`SweepSpec::parse`] are rejected.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use super::sampling::SamplingRegime;
use super::HarnessError;
use crate::attack::StrategyKind;
use crate::baselines::DEFAULT_PROBE_DELTA;
use crate::dp::lapgraph::DEFAULT_COUNT_FRACTION;
use crate::gcn::TrainConfig;
use crate::generate::{FeatureModel, FeatureSpec, SbmSpec};
use crate::io::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Sbm(SbmSpec),
    Files {
        edges: PathBuf,
        features: PathBuf,
        labels: PathBuf,
    },
}

/// How the decision threshold is picked for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    /// One `R` tuned over all (target, candidate) pairs of the run.
    Global,
    /// `R` tuned separately for every target.
    PerTarget,
    /// Per target, the `k` largest scores where `k` is its true neighbour
    /// count inside the target set.
    TopK,
}

impl ThresholdMode {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdMode::Global => "global",
            ThresholdMode::PerTarget => "per_target",
            ThresholdMode::TopK => "top_k",
        }
    }
}

impl FromStr for ThresholdMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "global" => Ok(ThresholdMode::Global),
            "per_target" => Ok(ThresholdMode::PerTarget),
            "top_k" => Ok(ThresholdMode::TopK),
            other => Err(HarnessError::Spec(format!("unknown threshold mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Baseline {
    LinkTeller,
    Lsa2Post,
    Lsa2Attr,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::LinkTeller => "linkteller",
            Baseline::Lsa2Post => "lsa2_post",
            Baseline::Lsa2Attr => "lsa2_attr",
        }
    }
}

impl FromStr for Baseline {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "linkteller" => Ok(Baseline::LinkTeller),
            "lsa2_post" => Ok(Baseline::Lsa2Post),
            "lsa2_attr" => Ok(Baseline::Lsa2Attr),
            other => Err(HarnessError::Spec(format!("unknown baseline {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub graph: GraphSource,
    /// Fraction of nodes whose labels are used for training; the rest are
    /// held out for utility.
    pub train_fraction: f64,
    pub depths: Vec<usize>,
    pub hidden: usize,
    /// `seed` is ignored; training seeds derive from the master seed.
    pub train: TrainConfig,
    pub strategies: Vec<StrategyKind>,
    pub baselines: Vec<Baseline>,
    pub probe_delta: f64,
    pub num_targets: usize,
    pub regime: SamplingRegime,
    pub threshold: ThresholdMode,
    /// `None` is the undefended setting.
    pub epsilons: Vec<Option<f64>>,
    pub count_fraction: f64,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            graph: GraphSource::Sbm(SbmSpec {
                block_sizes: vec![150, 150],
                p_in: 0.1,
                p_out: 0.01,
                features: FeatureSpec::binary(64, 0.2, 0.02),
            }),
            train_fraction: 0.5,
            depths: vec![2],
            hidden: 16,
            // He-style init keeps depth-4 stacks trainable; short training
            // keeps the posteriors away from saturation.
            train: TrainConfig {
                learning_rate: 0.1,
                epochs: 60,
                weight_init_scale: 6f64.sqrt(),
                l2: 5e-3,
                ..TrainConfig::default()
            },
            strategies: vec![StrategyKind::AllOnes],
            baselines: Vec::new(),
            probe_delta: DEFAULT_PROBE_DELTA,
            num_targets: 50,
            regime: SamplingRegime::Uniform,
            threshold: ThresholdMode::Global,
            epsilons: vec![None],
            count_fraction: DEFAULT_COUNT_FRACTION,
            seeds: vec![1, 2, 3, 4, 5],
            master_seed: 0,
        }
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, HarnessError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| HarnessError::Spec(format!("{key}: cannot parse {s:?}"))))
        .collect()
}

fn one<T: FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.trim()
        .parse::<T>()
        .map_err(|_| HarnessError::Spec(format!("{key}: cannot parse {v:?}")))
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

pub fn epsilon_label(eps: Option<f64>) -> String {
    eps.map_or_else(|| "none".to_string(), fmt_f64)
}

/// Applies the feature keys to `current`. Without `graph.feature_model` the
/// current kind is kept; unset parameters keep their current values when the
/// kind is unchanged.
fn feature_model(current: FeatureModel, name: Option<&str>, p: [Option<f64>; 4]) -> Result<FeatureModel, HarnessError> {
    let stray = |keys: &str| HarnessError::Spec(format!("{keys} do not apply to this feature model"));
    let name = name.unwrap_or(match current {
        FeatureModel::Gaussian { .. } => "gaussian",
        FeatureModel::Binary { .. } => "binary",
    });
    match name {
        "gaussian" => {
            if p[2].is_some() || p[3].is_some() {
                return Err(stray("graph.feature_on/off"));
            }
            let (signal, noise) = match current {
                FeatureModel::Gaussian { signal, noise } => (signal, noise),
                FeatureModel::Binary { .. } => (1.0, 0.5),
            };
            Ok(FeatureModel::Gaussian {
                signal: p[0].unwrap_or(signal),
                noise: p[1].unwrap_or(noise),
            })
        }
        "binary" => {
            if p[0].is_some() || p[1].is_some() {
                return Err(stray("graph.feature_signal/noise"));
            }
            let (on, off) = match current {
                FeatureModel::Binary { on, off } => (on, off),
                FeatureModel::Gaussian { .. } => (0.2, 0.02),
            };
            Ok(FeatureModel::Binary {
                on: p[2].unwrap_or(on),
                off: p[3].unwrap_or(off),
            })
        }
        other => Err(HarnessError::Spec(format!("unknown feature model {other:?}"))),
    }
}

impl SweepSpec {
    /// Parses a spec file; keys absent from the text keep their defaults.
    ///
    /// Keys: `graph.blocks`, `graph.p_in`, `graph.p_out`,
    /// `graph.feature_dim`, `graph.feature_model` (`gaussian` with
    /// `graph.feature_signal`, `graph.feature_noise`, or `binary` with
    /// `graph.feature_on`, `graph.feature_off`),
    /// `graph.edges`, `graph.features`, `graph.labels` (the three file keys
    /// replace the generator), `model.depths`, `model.hidden`,
    /// `model.learning_rate`, `model.epochs`, `model.init_scale`,
    /// `model.l2`, `model.train_fraction`, `attack.strategies`,
    /// `attack.baselines`, `attack.probe_delta`, `attack.targets`,
    /// `attack.regime`, `attack.threshold`, `dp.epsilons`,
    /// `dp.count_fraction`, `seeds`, `master_seed`.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut spec = SweepSpec::default();
        let mut sbm = match &spec.graph {
            GraphSource::Sbm(s) => s.clone(),
            GraphSource::Files { .. } => unreachable!(),
        };
        let (mut edges, mut features, mut labels) = (None, None, None);
        let mut fmodel: Option<String> = None;
        let mut fparams: [Option<f64>; 4] = [None; 4];
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Spec(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, v) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(HarnessError::Spec(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            match key {
                "graph.blocks" => sbm.block_sizes = list(key, v)?,
                "graph.p_in" => sbm.p_in = one(key, v)?,
                "graph.p_out" => sbm.p_out = one(key, v)?,
                "graph.feature_dim" => sbm.features.dim = one(key, v)?,
                "graph.feature_model" => fmodel = Some(v.to_string()),
                "graph.feature_signal" => fparams[0] = Some(one(key, v)?),
                "graph.feature_noise" => fparams[1] = Some(one(key, v)?),
                "graph.feature_on" => fparams[2] = Some(one(key, v)?),
                "graph.feature_off" => fparams[3] = Some(one(key, v)?),
                "graph.edges" => edges = Some(PathBuf::from(v)),
                "graph.features" => features = Some(PathBuf::from(v)),
                "graph.labels" => labels = Some(PathBuf::from(v)),
                "model.depths" => spec.depths = list(key, v)?,
                "model.hidden" => spec.hidden = one(key, v)?,
                "model.learning_rate" => spec.train.learning_rate = one(key, v)?,
                "model.epochs" => spec.train.epochs = one(key, v)?,
                "model.init_scale" => spec.train.weight_init_scale = one(key, v)?,
                "model.l2" => spec.train.l2 = one(key, v)?,
                "model.train_fraction" => spec.train_fraction = one(key, v)?,
                "attack.strategies" => {
                    spec.strategies = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| s.parse().map_err(|e| HarnessError::Spec(format!("{key}: {e}"))))
                        .collect::<Result<_, _>>()?
                }
                "attack.baselines" => spec.baselines = list(key, v)?,
                "attack.probe_delta" => spec.probe_delta = one(key, v)?,
                "attack.targets" => spec.num_targets = one(key, v)?,
                "attack.regime" => spec.regime = v.parse()?,
                "attack.threshold" => spec.threshold = v.parse()?,
                "dp.epsilons" => {
                    spec.epsilons = v
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| match s {
                            "none" => Ok(None),
                            s => one::<f64>(key, s).map(Some),
                        })
                        .collect::<Result<_, _>>()?
                }
                "dp.count_fraction" => spec.count_fraction = one(key, v)?,
                "seeds" => spec.seeds = list(key, v)?,
                "master_seed" => spec.master_seed = one(key, v)?,
                other => return Err(HarnessError::Spec(format!("line {}: unknown key {other}", lineno + 1))),
            }
        }
        sbm.features.model = feature_model(sbm.features.model, fmodel.as_deref(), fparams)?;
        spec.graph = match (edges, features, labels) {
            (None, None, None) => GraphSource::Sbm(sbm),
            (Some(edges), Some(features), Some(labels)) => GraphSource::Files { edges, features, labels },
            _ => {
                return Err(HarnessError::Spec(
                    "graph.edges, graph.features and graph.labels go together".into(),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Spec(m.to_string()));
        if self.depths.is_empty() || self.strategies.is_empty() && self.baselines.is_empty() {
            return bad("depths and strategies/baselines must be non-empty");
        }
        if self.epsilons.is_empty() || self.seeds.is_empty() {
            return bad("epsilons and seeds must be non-empty");
        }
        if self.depths.contains(&0) {
            return bad("depth must be at least 1");
        }
        if self.hidden == 0 {
            return bad("model.hidden must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("model.train_fraction must lie in (0, 1)");
        }
        if self.num_targets < 2 {
            return bad("attack.targets must be at least 2");
        }
        if !(self.probe_delta > 0.0 && self.probe_delta.is_finite()) {
            return bad("attack.probe_delta must be positive");
        }
        if self.epsilons.iter().flatten().any(|&e| !(e > 0.0 && e.is_finite())) {
            return bad("epsilons must be positive");
        }
        if !(self.count_fraction > 0.0 && self.count_fraction < 1.0) {
            return bad("dp.count_fraction must lie in (0, 1)");
        }
        for s in &self.strategies {
            s.validate().map_err(|e| HarnessError::Spec(e.to_string()))?;
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal spec.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.graph {
            GraphSource::Sbm(s) => {
                kv("graph.blocks", join(&s.block_sizes, |b| b.to_string()));
                kv("graph.p_in", fmt_f64(s.p_in));
                kv("graph.p_out", fmt_f64(s.p_out));
                kv("graph.feature_dim", s.features.dim.to_string());
                match s.features.model {
                    FeatureModel::Gaussian { signal, noise } => {
                        kv("graph.feature_model", "gaussian".into());
                        kv("graph.feature_signal", fmt_f64(signal));
                        kv("graph.feature_noise", fmt_f64(noise));
                    }
                    FeatureModel::Binary { on, off } => {
                        kv("graph.feature_model", "binary".into());
                        kv("graph.feature_on", fmt_f64(on));
                        kv("graph.feature_off", fmt_f64(off));
                    }
                }
            }
            GraphSource::Files { edges, features, labels } => {
                kv("graph.edges", edges.display().to_string());
                kv("graph.features", features.display().to_string());
                kv("graph.labels", labels.display().to_string());
            }
        }
        kv("model.depths", join(&self.depths, |d| d.to_string()));
        kv("model.hidden", self.hidden.to_string());
        kv("model.learning_rate", fmt_f64(self.train.learning_rate));
        kv("model.epochs", self.train.epochs.to_string());
        kv("model.init_scale", fmt_f64(self.train.weight_init_scale));
        kv("model.l2", fmt_f64(self.train.l2));
        kv("model.train_fraction", fmt_f64(self.train_fraction));
        kv("attack.strategies", join(&self.strategies, |s| s.to_string()));
        kv("attack.baselines", join(&self.baselines, |b| b.name().to_string()));
        kv("attack.probe_delta", fmt_f64(self.probe_delta));
        kv("attack.targets", self.num_targets.to_string());
        kv("attack.regime", self.regime.to_string());
        kv("attack.threshold", self.threshold.name().to_string());
        kv("dp.epsilons", join(&self.epsilons, |e| epsilon_label(*e)));
        kv("dp.count_fraction", fmt_f64(self.count_fraction));
        kv("seeds", join(&self.seeds, |s| s.to_string()));
        kv("master_seed", self.master_seed.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let s = SweepSpec::parse(
            "# demo\n graph.blocks = 100, 100\ngraph.p_in = 0.2\nmodel.depths = 2,3, 4\n\
             attack.strategies = all_ones, influence:0.5\ndp.epsilons = none, 0.5, 10 # trailing\nseeds = 7\n",
        )
        .unwrap();
        let GraphSource::Sbm(g) = &s.graph else { panic!() };
        assert_eq!(g.block_sizes, vec![100, 100]);
        assert_eq!(g.p_in, 0.2);
        assert_eq!(s.depths, vec![2, 3, 4]);
        assert_eq!(s.strategies, vec![StrategyKind::AllOnes, StrategyKind::Influence(0.5)]);
        assert_eq!(s.epsilons, vec![None, Some(0.5), Some(10.0)]);
        assert_eq!(s.seeds, vec![7]);
        assert_eq!(SweepSpec::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_specs() {
        for text in [
            "bogus = 1",
            "seeds = ",
            "model.depths = 0",
            "dp.epsilons = -1",
            "attack.strategies = nope",
            "seeds = 1\nseeds = 2",
            "graph.edges = e.txt",
            "no equals sign",
            "attack.threshold = best",
            "graph.feature_model = binary\ngraph.feature_noise = 1",
            "graph.feature_model = sparse",
        ] {
            assert!(SweepSpec::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn omitted_keys_keep_default_features() {
        let s = SweepSpec::parse("seeds = 1").unwrap();
        assert_eq!(s.graph, SweepSpec::default().graph);
        let s = SweepSpec::parse("graph.feature_off = 0.05").unwrap();
        let GraphSource::Sbm(g) = &s.graph else { panic!() };
        assert_eq!(g.features, FeatureSpec::binary(64, 0.2, 0.05));
        let s = SweepSpec::parse("graph.feature_model = gaussian").unwrap();
        let GraphSource::Sbm(g) = &s.graph else { panic!() };
        assert_eq!(g.features.model, FeatureSpec::default().model);
    }

    #[test]
    fn binary_features() {
        let s = SweepSpec::parse("graph.feature_model = binary\ngraph.feature_dim = 64\ngraph.feature_on = 0.3").unwrap();
        let GraphSource::Sbm(g) = &s.graph else { panic!() };
        assert_eq!(g.features, FeatureSpec::binary(64, 0.3, 0.02));
        assert_eq!(SweepSpec::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn file_source() {
        let s = SweepSpec::parse("graph.edges = a\ngraph.features = b\ngraph.labels = c").unwrap();
        assert!(matches!(s.graph, GraphSource::Files { .. }));
        assert_eq!(SweepSpec::parse(&s.to_text()).unwrap(), s);
    }
}
