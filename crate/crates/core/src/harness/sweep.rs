//! Sweep runner: every (seed, depth, epsilon) job generates or loads the
//! graph, trains a model, stands up a server and attacks every target with
//! every strategy. Jobs run on a bounded rayon pool; outputs are sorted by
//! axis position so they do not depend on scheduling.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::sampling::{sample_targets, split_nodes};
use super::spec::{epsilon_label, Baseline, GraphSource, SweepSpec, ThresholdMode};
use super::HarnessError;
use crate::attack::{measure, tune_threshold, AttackInput, StrategyKind, ThresholdPolicy};
use crate::baselines::{edges_among, linkteller_attack, lsa2_attr, lsa2_post};
use crate::dp::{BudgetLedger, LapGraphConfig};
use crate::gcn::{accuracy, train, TrainConfig};
use crate::generate::generate_sbm;
use crate::graph::{Graph, NodeId};
use crate::io::{fmt_f64, load_graph};
use crate::linalg::Matrix;
use crate::metrics::{macro_f1, Metrics};
use crate::rng::{derive_seed, stream};
use crate::server::{release_training_graph, BlackBox, QueryEvent, Server};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "NILS_WORKERS";

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// `None` lets rayon pick.
    pub workers: Option<usize>,
    pub trace: bool,
}

impl SweepOptions {
    /// Reads the worker count from [`WORKERS_ENV`].
    pub fn from_env(trace: bool) -> Result<Self, HarnessError> {
        let workers = match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(w) if w > 0 => Some(w),
                _ => return Err(HarnessError::Spec(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
            },
            Err(_) => None,
        };
        Ok(Self { workers, trace })
    }
}

/// One row of `results.csv`: a single target (or `None` for set-level
/// baselines) in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRecord {
    pub target: Option<NodeId>,
    pub strategy: String,
    pub depth: usize,
    pub epsilon: Option<f64>,
    pub metrics: Metrics,
    pub threshold: Option<f64>,
    pub seed: u64,
}

/// One (strategy, depth, epsilon, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub depth: usize,
    pub epsilon: Option<f64>,
    pub strategy: String,
    /// Pooled over every (target, candidate) decision of the run.
    pub metrics: Option<Metrics>,
    /// Mean of per-target F1.
    pub mean_target_f1: Option<f64>,
    pub threshold: Option<f64>,
    pub train_acc: Option<f64>,
    pub utility: Option<f64>,
    pub ledger_total: f64,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub depth: usize,
    pub epsilon: Option<f64>,
    pub runs: usize,
    pub failed: usize,
    pub f1_mean: Option<f64>,
    pub f1_std: Option<f64>,
    pub precision_mean: Option<f64>,
    pub recall_mean: Option<f64>,
    pub train_acc_mean: Option<f64>,
    pub utility_mean: Option<f64>,
    pub utility_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub seed: u64,
    pub depth: usize,
    pub epsilon_setting: String,
    pub strategy: String,
    #[serde(flatten)]
    pub event: QueryEvent,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub targets: Vec<TargetRecord>,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub trace: Vec<TraceRecord>,
    /// Whether tracing was requested.
    pub traced: bool,
}

struct Prepared {
    graph: Graph,
    targets: Vec<NodeId>,
    knowledge: Matrix,
    train_mask: Vec<usize>,
    heldout: Vec<usize>,
}

fn prepare(spec: &SweepSpec, seed: u64) -> Result<Prepared, HarnessError> {
    let graph_seed = derive_seed(&[spec.master_seed, seed]);
    let graph = match &spec.graph {
        GraphSource::Sbm(s) => generate_sbm(graph_seed, s)?,
        GraphSource::Files { edges, features, labels } => load_graph(edges, features, Some(labels))?,
    };
    if graph.labels().is_none() {
        return Err(HarnessError::MissingLabels);
    }
    let (train_mask, heldout) = split_nodes(graph.num_nodes(), spec.train_fraction, &mut stream(graph_seed, 2))?;
    let targets = sample_targets(graph.adjacency(), spec.regime, spec.num_targets, &mut stream(graph_seed, 3))?;
    let idx: Vec<usize> = targets.iter().map(|t| t.0).collect();
    let knowledge = graph.features().select_rows(&idx);
    Ok(Prepared {
        graph,
        targets,
        knowledge,
        train_mask,
        heldout,
    })
}

#[derive(Default)]
struct JobOut {
    targets: Vec<TargetRecord>,
    runs: Vec<RunRecord>,
    trace: Vec<TraceRecord>,
}

struct Cell {
    seed: u64,
    depth: usize,
    epsilon: Option<f64>,
}

impl Cell {
    fn run(&self, strategy: &str) -> RunRecord {
        RunRecord {
            seed: self.seed,
            depth: self.depth,
            epsilon: self.epsilon,
            strategy: strategy.to_string(),
            metrics: None,
            mean_target_f1: None,
            threshold: None,
            train_acc: None,
            utility: None,
            ledger_total: 0.0,
            error: None,
        }
    }
}

fn strategy_labels(spec: &SweepSpec) -> Vec<String> {
    spec.strategies
        .iter()
        .map(|s| s.to_string())
        .chain(spec.baselines.iter().map(|b| b.name().to_string()))
        .collect()
}

struct Setup {
    server: Server,
    train_acc: f64,
    utility: f64,
}

fn setup(spec: &SweepSpec, prep: &Prepared, cell: &Cell, dp_seed: u64) -> Result<Setup, HarnessError> {
    let hidden = vec![spec.hidden; cell.depth - 1];
    let cfg = TrainConfig {
        seed: derive_seed(&[spec.master_seed, cell.seed, cell.depth as u64]),
        ..spec.train.clone()
    };
    let g = &prep.graph;
    let server = match cell.epsilon {
        None => {
            let model = train(g, cell.depth, &hidden, &cfg, &prep.train_mask)?;
            Server::new(g.clone(), Arc::new(model))?
        }
        Some(eps) => {
            let lap = LapGraphConfig {
                count_fraction: spec.count_fraction,
                ..LapGraphConfig::new(eps)
            };
            let mut rng = stream(dp_seed, 0);
            let mut ledger = BudgetLedger::new();
            let released = release_training_graph(g, &lap, &mut rng, &mut ledger)?;
            let model = train(&released, cell.depth, &hidden, &cfg, &prep.train_mask)?;
            Server::defended(g.clone(), Arc::new(model), lap, &released, ledger, rng)?
        }
    };
    // Both figures are measured on the graph the server actually serves.
    let p = server.all_predictions();
    let labels = g.labels().ok_or(HarnessError::MissingLabels)?;
    let train_acc = accuracy(p, labels, &prep.train_mask);
    let pred = p.predicted_classes();
    let sel = |v: &[usize]| prep.heldout.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let utility = macro_f1(&sel(&pred), &sel(labels), g.num_classes());
    Ok(Setup {
        server,
        train_acc,
        utility,
    })
}

struct TargetScores {
    target: NodeId,
    distances: Vec<f64>,
    truth: Vec<bool>,
}

fn counts(d: &[f64], truth: &[bool], r: f64) -> (usize, usize, usize) {
    let pred = d.iter().filter(|&&x| x >= r).count();
    let tp = d.iter().zip(truth).filter(|&(&x, &t)| x >= r && t).count();
    (tp, pred, truth.iter().filter(|&&t| t).count())
}

/// Per-target `(target, metrics, R)`, pooled metrics and the global `R` if any.
type Attacked = (Vec<(NodeId, Metrics, f64)>, Metrics, Option<f64>);

/// Attacks every target and applies the threshold mode.
fn attack_targets(
    server: &mut Server,
    prep: &Prepared,
    kind: StrategyKind,
    mode: ThresholdMode,
) -> Result<Attacked, HarnessError> {
    let adj = prep.graph.adjacency();
    let mut scored = Vec::with_capacity(prep.targets.len());
    for &t in &prep.targets {
        let input = AttackInput {
            targets: &prep.targets,
            target: t,
            knowledge: Some(&prep.knowledge),
            feature_dim: prep.graph.feature_dim(),
        };
        let s = measure(server, &input, kind)?;
        let (nodes, distances) = s.candidates();
        let truth = nodes.iter().map(|v| adj.has_edge(t.0, v.0)).collect();
        scored.push(TargetScores {
            target: t,
            distances,
            truth,
        });
    }
    let global = match mode {
        ThresholdMode::Global => {
            let d: Vec<f64> = scored.iter().flat_map(|s| s.distances.iter().copied()).collect();
            let t: Vec<bool> = scored.iter().flat_map(|s| s.truth.iter().copied()).collect();
            Some(tune_threshold(&d, &t).0)
        }
        _ => None,
    };
    let (mut tp, mut pred, mut actual) = (0, 0, 0);
    let mut per_target = Vec::with_capacity(scored.len());
    for s in &scored {
        let r = match mode {
            ThresholdMode::Global => global.expect("set above"),
            ThresholdMode::PerTarget => tune_threshold(&s.distances, &s.truth).0,
            ThresholdMode::TopK => {
                let k = s.truth.iter().filter(|&&t| t).count();
                ThresholdPolicy::TopK(k).choose(&s.distances, None)?
            }
        };
        let c = counts(&s.distances, &s.truth, r);
        tp += c.0;
        pred += c.1;
        actual += c.2;
        per_target.push((s.target, Metrics::from_counts(c.0, c.1, c.2), r));
    }
    Ok((per_target, Metrics::from_counts(tp, pred, actual), global))
}

fn run_baseline(server: &Server, prep: &Prepared, b: Baseline, delta: f64) -> Result<Metrics, HarnessError> {
    let truth = edges_among(prep.graph.adjacency(), &prep.targets);
    let k = truth.len();
    let predicted = match b {
        Baseline::LinkTeller => linkteller_attack(server, &prep.targets, delta, k)?,
        Baseline::Lsa2Post => lsa2_post(&server.predict(&prep.targets)?, &prep.targets, k)?,
        Baseline::Lsa2Attr => lsa2_attr(&prep.knowledge, &prep.targets, k)?,
    };
    Ok(Metrics::of_sets(&predicted, &truth))
}

fn run_job(spec: &SweepSpec, prep: Result<&Prepared, &str>, cell: Cell, trace: bool) -> JobOut {
    let labels = strategy_labels(spec);
    let mut out = JobOut::default();
    let prep = match prep {
        Ok(p) => p,
        Err(e) => {
            for l in &labels {
                out.runs.push(RunRecord {
                    error: Some(e.to_string()),
                    ..cell.run(l)
                });
            }
            return out;
        }
    };
    let dp_seed = derive_seed(&[
        spec.master_seed,
        cell.seed,
        cell.depth as u64,
        cell.epsilon.map_or(u64::MAX, f64::to_bits),
    ]);
    let mut base = match setup(spec, prep, &cell, dp_seed) {
        Ok(s) => s,
        Err(e) => {
            for l in &labels {
                out.runs.push(RunRecord {
                    error: Some(e.to_string()),
                    ..cell.run(l)
                });
            }
            return out;
        }
    };
    if trace {
        base.server.enable_trace();
    }
    let eps_label = epsilon_label(cell.epsilon);
    let collect_trace = |server: &mut Server, label: &str, out: &mut JobOut| {
        for event in server.take_trace() {
            out.trace.push(TraceRecord {
                seed: cell.seed,
                depth: cell.depth,
                epsilon_setting: eps_label.clone(),
                strategy: label.to_string(),
                event,
            });
        }
    };
    for (i, &kind) in spec.strategies.iter().enumerate() {
        let label = kind.to_string();
        let mut server = base.server.clone();
        server.reseed(stream(dp_seed, 1 + i as u64));
        let mut run = RunRecord {
            train_acc: Some(base.train_acc),
            utility: Some(base.utility),
            ..cell.run(&label)
        };
        match attack_targets(&mut server, prep, kind, spec.threshold) {
            Ok((per_target, pooled, global)) => {
                run.mean_target_f1 =
                    Some(per_target.iter().map(|(_, m, _)| m.f1).sum::<f64>() / per_target.len() as f64);
                run.metrics = Some(pooled);
                run.threshold = global;
                for (t, m, r) in per_target {
                    out.targets.push(TargetRecord {
                        target: Some(t),
                        strategy: label.clone(),
                        depth: cell.depth,
                        epsilon: cell.epsilon,
                        metrics: m,
                        threshold: Some(r),
                        seed: cell.seed,
                    });
                }
            }
            Err(e) => run.error = Some(e.to_string()),
        }
        // Reset truncates the ledger, so report what one target's run spends:
        // the training release plus one connect.
        run.ledger_total = match cell.epsilon {
            Some(e) => server.ledger().total() + e,
            None => 0.0,
        };
        collect_trace(&mut server, &label, &mut out);
        out.runs.push(run);
    }
    for &b in &spec.baselines {
        let label = b.name().to_string();
        let mut server = base.server.clone();
        let mut run = RunRecord {
            train_acc: Some(base.train_acc),
            utility: Some(base.utility),
            ledger_total: server.ledger().total(),
            ..cell.run(&label)
        };
        match run_baseline(&server, prep, b, spec.probe_delta) {
            Ok(m) => {
                run.metrics = Some(m);
                run.mean_target_f1 = Some(m.f1);
                out.targets.push(TargetRecord {
                    target: None,
                    strategy: label.clone(),
                    depth: cell.depth,
                    epsilon: cell.epsilon,
                    metrics: m,
                    threshold: None,
                    seed: cell.seed,
                });
            }
            Err(e) => run.error = Some(e.to_string()),
        }
        collect_trace(&mut server, &label, &mut out);
        out.runs.push(run);
    }
    out
}

/// Sample mean and (n − 1) standard deviation; std is 0 for one value.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

fn summarize(spec: &SweepSpec, runs: &[RunRecord]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for label in strategy_labels(spec) {
        for &depth in &spec.depths {
            for &eps in &spec.epsilons {
                let cell: Vec<&RunRecord> = runs
                    .iter()
                    .filter(|r| r.strategy == label && r.depth == depth && r.epsilon == eps)
                    .collect();
                out.push(summary_row(&label, depth, eps, &cell));
            }
        }
    }
    out
}

fn summary_row(label: &str, depth: usize, eps: Option<f64>, cell: &[&RunRecord]) -> SummaryRow {
    let ok: Vec<&RunRecord> = cell.iter().copied().filter(|r| r.ok()).collect();
    let pick = |f: &dyn Fn(&RunRecord) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
    let f1 = mean_std(&pick(&|r| r.metrics.map(|m| m.f1)));
    let utility = mean_std(&pick(&|r| r.utility));
    SummaryRow {
        strategy: label.to_string(),
        depth,
        epsilon: eps,
        runs: cell.len(),
        failed: cell.len() - ok.len(),
        f1_mean: f1.map(|x| x.0),
        f1_std: f1.map(|x| x.1),
        precision_mean: mean_std(&pick(&|r| r.metrics.map(|m| m.precision))).map(|x| x.0),
        recall_mean: mean_std(&pick(&|r| r.metrics.map(|m| m.recall))).map(|x| x.0),
        train_acc_mean: mean_std(&pick(&|r| r.train_acc)).map(|x| x.0),
        utility_mean: utility.map(|x| x.0),
        utility_std: utility.map(|x| x.1),
    }
}

/// Runs every cell of `spec`. Errors only for an invalid spec or a worker
/// pool that cannot be built; failing cells are recorded in the result.
pub fn run_sweep(spec: &SweepSpec, opts: &SweepOptions) -> Result<SweepResult, HarnessError> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| HarnessError::Output(e.to_string()))?;
    let (prepared, jobs) = pool.install(|| {
        let prepared: Vec<Result<Prepared, String>> = spec
            .seeds
            .par_iter()
            .map(|&s| prepare(spec, s).map_err(|e| e.to_string()))
            .collect();
        let mut cells = Vec::new();
        for (si, &seed) in spec.seeds.iter().enumerate() {
            for &depth in &spec.depths {
                for &epsilon in &spec.epsilons {
                    cells.push((si, Cell { seed, depth, epsilon }));
                }
            }
        }
        let jobs: Vec<JobOut> = cells
            .into_par_iter()
            .map(|(si, cell)| {
                let prep = prepared[si].as_ref().map_err(String::as_str);
                run_job(spec, prep, cell, opts.trace)
            })
            .collect();
        (prepared, jobs)
    });
    drop(prepared);

    let labels = strategy_labels(spec);
    let pos = |v: &[String], x: &String| v.iter().position(|y| y == x).unwrap_or(usize::MAX);
    let depth_pos = |d: usize| spec.depths.iter().position(|&x| x == d).unwrap_or(usize::MAX);
    let eps_pos = |e: Option<f64>| spec.epsilons.iter().position(|&x| x == e).unwrap_or(usize::MAX);
    let seed_pos = |s: u64| spec.seeds.iter().position(|&x| x == s).unwrap_or(usize::MAX);

    let mut targets = Vec::new();
    let mut runs = Vec::new();
    let mut trace = Vec::new();
    for j in jobs {
        targets.extend(j.targets);
        runs.extend(j.runs);
        trace.extend(j.trace);
    }
    // Stable sorts keep per-target and per-event order within a cell.
    runs.sort_by_key(|r| (pos(&labels, &r.strategy), depth_pos(r.depth), eps_pos(r.epsilon), seed_pos(r.seed)));
    targets.sort_by_key(|r| (pos(&labels, &r.strategy), depth_pos(r.depth), eps_pos(r.epsilon), seed_pos(r.seed)));
    trace.sort_by_key(|r| {
        let e = spec
            .epsilons
            .iter()
            .position(|&x| epsilon_label(x) == r.epsilon_setting)
            .unwrap_or(usize::MAX);
        (seed_pos(r.seed), depth_pos(r.depth), e, pos(&labels, &r.strategy))
    });
    let summary = summarize(spec, &runs);
    Ok(SweepResult {
        spec: spec.clone(),
        targets,
        runs,
        summary,
        trace,
        traced: opts.trace,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub const RESULTS_HEADER: [&str; 9] = [
    "target_id", "strategy", "depth", "epsilon", "precision", "recall", "f1", "threshold", "seed",
];
pub const RUNS_HEADER: [&str; 14] = [
    "seed", "depth", "epsilon", "strategy", "status", "precision", "recall", "f1", "mean_target_f1", "threshold",
    "train_acc", "utility", "ledger_total", "error",
];
pub const SUMMARY_HEADER: [&str; 12] = [
    "strategy", "depth", "epsilon", "runs", "failed", "f1_mean", "f1_std", "precision_mean", "recall_mean",
    "train_acc_mean", "utility_mean", "utility_std",
];

fn summary_fields(s: &SummaryRow) -> Vec<String> {
    vec![
        s.strategy.clone(),
        s.depth.to_string(),
        epsilon_label(s.epsilon),
        s.runs.to_string(),
        s.failed.to_string(),
        opt(s.f1_mean),
        opt(s.f1_std),
        opt(s.precision_mean),
        opt(s.recall_mean),
        opt(s.train_acc_mean),
        opt(s.utility_mean),
        opt(s.utility_std),
    ]
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Output(format!("{}: {e}", path.display()))
}

fn write_csv<I: IntoIterator<Item = Vec<String>>>(path: &Path, header: &[&str], rows: I) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| csv_err(path, e))
}

#[derive(Serialize)]
struct Metadata<'a> {
    crate_version: &'a str,
    spec: String,
    threshold_mode: &'a str,
    run_f1: &'a str,
    std: &'a str,
    normalization: &'a str,
    sampling_regime: String,
    degree_terciles: &'a str,
    lsa2_post_distance: &'a str,
    lsa2_attr_distance: &'a str,
    linkteller_symmetrization: &'a str,
    baseline_k: &'a str,
    utility: &'a str,
    seed_derivation: &'a str,
}

impl SweepResult {
    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(RunRecord::ok)
    }

    pub fn summary_for(&self, strategy: &str, depth: usize, epsilon: Option<f64>) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.strategy == strategy && s.depth == depth && s.epsilon == epsilon)
    }

    /// Writes `results.csv`, `runs.csv`, `summary.csv`, `f1_vs_epsilon.csv`,
    /// `f1_vs_depth.csv`, `metadata.json` and, with tracing, `trace.jsonl`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir).map_err(|e| csv_err(dir, e))?;
        write_csv(
            &dir.join("results.csv"),
            &RESULTS_HEADER,
            self.targets.iter().map(|t| {
                vec![
                    t.target.map_or_else(|| "all".to_string(), |n| n.0.to_string()),
                    t.strategy.clone(),
                    t.depth.to_string(),
                    epsilon_label(t.epsilon),
                    fmt_f64(t.metrics.precision),
                    fmt_f64(t.metrics.recall),
                    fmt_f64(t.metrics.f1),
                    opt(t.threshold),
                    t.seed.to_string(),
                ]
            }),
        )?;
        write_csv(
            &dir.join("runs.csv"),
            &RUNS_HEADER,
            self.runs.iter().map(|r| {
                vec![
                    r.seed.to_string(),
                    r.depth.to_string(),
                    epsilon_label(r.epsilon),
                    r.strategy.clone(),
                    if r.ok() { "ok" } else { "failed" }.to_string(),
                    opt(r.metrics.map(|m| m.precision)),
                    opt(r.metrics.map(|m| m.recall)),
                    opt(r.metrics.map(|m| m.f1)),
                    opt(r.mean_target_f1),
                    opt(r.threshold),
                    opt(r.train_acc),
                    opt(r.utility),
                    fmt_f64(r.ledger_total),
                    r.error.clone().unwrap_or_default(),
                ]
            }),
        )?;
        write_csv(&dir.join("summary.csv"), &SUMMARY_HEADER, self.summary.iter().map(summary_fields))?;
        write_csv(
            &dir.join("f1_vs_epsilon.csv"),
            &["strategy", "depth", "epsilon", "f1_mean", "f1_std", "utility_mean", "utility_std"],
            self.summary.iter().map(|s| {
                vec![
                    s.strategy.clone(),
                    s.depth.to_string(),
                    epsilon_label(s.epsilon),
                    opt(s.f1_mean),
                    opt(s.f1_std),
                    opt(s.utility_mean),
                    opt(s.utility_std),
                ]
            }),
        )?;
        let mut by_depth: Vec<&SummaryRow> = self.summary.iter().collect();
        let eps_pos = |e: Option<f64>| self.spec.epsilons.iter().position(|&x| x == e);
        by_depth.sort_by_key(|s| (s.strategy.clone(), eps_pos(s.epsilon), s.depth));
        write_csv(
            &dir.join("f1_vs_depth.csv"),
            &["strategy", "epsilon", "depth", "f1_mean", "f1_std"],
            by_depth.iter().map(|s| {
                vec![
                    s.strategy.clone(),
                    epsilon_label(s.epsilon),
                    s.depth.to_string(),
                    opt(s.f1_mean),
                    opt(s.f1_std),
                ]
            }),
        )?;
        let meta = Metadata {
            crate_version: env!("CARGO_PKG_VERSION"),
            spec: self.spec.to_text(),
            threshold_mode: self.spec.threshold.name(),
            run_f1: "pooled over all (target, candidate) decisions of a run",
            std: "sample standard deviation over seeds (n - 1)",
            normalization: "sym_self_loop",
            sampling_regime: self.spec.regime.to_string(),
            degree_terciles: "low: degree <= sorted[floor((n-1)/3)]; high: degree >= sorted[ceil(2(n-1)/3)]",
            lsa2_post_distance: "euclidean",
            lsa2_attr_distance: "cosine",
            linkteller_symmetrization: "mean of both directions",
            baseline_k: "true edge count among targets",
            utility: "macro-F1 on held-out nodes over the served (possibly perturbed) graph",
            seed_derivation: "graph: (master, seed); training: (master, seed, depth); dp noise: (master, seed, depth, epsilon)",
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| HarnessError::Output(e.to_string()))?;
        let path = dir.join("metadata.json");
        fs::write(&path, json + "\n").map_err(|e| csv_err(&path, e))?;
        if self.traced {
            let mut text = String::new();
            for t in &self.trace {
                text.push_str(&serde_json::to_string(t).map_err(|e| HarnessError::Output(e.to_string()))?);
                text.push('\n');
            }
            let path = dir.join("trace.jsonl");
            fs::write(&path, text).map_err(|e| csv_err(&path, e))?;
        }
        Ok(())
    }
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| csv_err(path, e))?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

/// Recomputes `summary.csv` from `runs.csv` in `dir` and checks every
/// aggregate matches exactly.
pub fn verify_dir(dir: &Path) -> Result<(), HarnessError> {
    let (rh, runs) = read_csv(&dir.join("runs.csv"))?;
    let (sh, summary) = read_csv(&dir.join("summary.csv"))?;
    if rh != RUNS_HEADER || sh != SUMMARY_HEADER {
        return Err(HarnessError::Verify("unexpected CSV header".into()));
    }
    let num = |s: &str| -> Result<Option<f64>, HarnessError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| HarnessError::Verify(format!("bad number {s:?}")))
        }
    };
    let parse_eps = |s: &str| -> Result<Option<f64>, HarnessError> {
        if s == "none" { Ok(None) } else { num(s) }
    };
    let mut records = Vec::with_capacity(runs.len());
    for r in &runs {
        let f1 = num(&r[7])?;
        let metrics = match (num(&r[5])?, num(&r[6])?, f1) {
            (Some(precision), Some(recall), Some(f1)) => Some(Metrics { precision, recall, f1 }),
            _ => None,
        };
        records.push(RunRecord {
            seed: r[0].parse().map_err(|_| HarnessError::Verify(format!("bad seed {:?}", r[0])))?,
            depth: r[1].parse().map_err(|_| HarnessError::Verify(format!("bad depth {:?}", r[1])))?,
            epsilon: parse_eps(&r[2])?,
            strategy: r[3].clone(),
            metrics,
            mean_target_f1: num(&r[8])?,
            threshold: num(&r[9])?,
            train_acc: num(&r[10])?,
            utility: num(&r[11])?,
            ledger_total: num(&r[12])?.unwrap_or(0.0),
            error: (r[4] != "ok").then(|| r[13].clone()),
        });
    }
    for row in &summary {
        let depth: usize = row[1]
            .parse()
            .map_err(|_| HarnessError::Verify(format!("bad depth {:?}", row[1])))?;
        let eps = parse_eps(&row[2])?;
        let cell: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.strategy == row[0] && r.depth == depth && r.epsilon == eps)
            .collect();
        let want = summary_fields(&summary_row(&row[0], depth, eps, &cell));
        if &want != row {
            return Err(HarnessError::Verify(format!("summary row {row:?} recomputes to {want:?}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{FeatureSpec, SbmSpec};

    fn small_spec() -> SweepSpec {
        SweepSpec {
            graph: GraphSource::Sbm(SbmSpec {
                block_sizes: vec![40, 40],
                p_in: 0.15,
                p_out: 0.01,
                features: FeatureSpec::binary(32, 0.25, 0.02),
            }),
            num_targets: 20,
            seeds: vec![1, 2],
            epsilons: vec![None, Some(1.0)],
            strategies: vec![StrategyKind::AllOnes, StrategyKind::Identity],
            baselines: vec![Baseline::Lsa2Post, Baseline::LinkTeller],
            master_seed: 9,
            ..SweepSpec::default()
        }
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[]), None);
        assert_eq!(mean_std(&[2.0]), Some((2.0, 0.0)));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_records_failures_without_aborting() {
        let r = run_sweep(&small_spec(), &SweepOptions::default()).unwrap();
        // LinkTeller cannot probe a defended server.
        let failed: Vec<&RunRecord> = r.runs.iter().filter(|r| !r.ok()).collect();
        assert_eq!(failed.len(), 2);
        assert!(failed.iter().all(|r| r.strategy == "linkteller" && r.epsilon == Some(1.0)));
        assert!(!r.all_ok());
        assert_eq!(r.runs.len(), 2 * 2 * 4);
        assert_eq!(r.summary.len(), 2 * 4);
        let s = r.summary_for("linkteller", 2, Some(1.0)).unwrap();
        assert_eq!((s.runs, s.failed, s.f1_mean), (2, 2, None));
        // 20 targets per run for each NILS strategy; one row per baseline run
        assert_eq!(r.targets.len(), 2 * 2 * 2 * 20 + 3 * 2);
    }

    #[test]
    fn written_outputs_verify_and_are_deterministic() {
        let mut spec = small_spec();
        spec.baselines = vec![Baseline::Lsa2Attr];
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let opts = SweepOptions {
            workers: Some(3),
            trace: true,
        };
        run_sweep(&spec, &opts).unwrap().write(a.path()).unwrap();
        run_sweep(&spec, &SweepOptions { workers: Some(1), trace: true }).unwrap().write(b.path()).unwrap();
        for f in ["results.csv", "runs.csv", "summary.csv", "f1_vs_epsilon.csv", "f1_vs_depth.csv", "metadata.json", "trace.jsonl"] {
            let x = fs::read(a.path().join(f)).unwrap();
            assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        verify_dir(a.path()).unwrap();
        let trace = fs::read_to_string(a.path().join("trace.jsonl")).unwrap();
        assert!(trace.lines().any(|l| l.contains("\"query\":\"connect\"") && l.contains("\"epsilon\":1")));

        // Tampering with an aggregate is caught.
        let p = a.path().join("summary.csv");
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
        cells[5] = "0.123".into();
        lines[1] = cells.join(",");
        fs::write(&p, lines.join("\n") + "\n").unwrap();
        assert!(verify_dir(a.path()).is_err());
    }

    #[test]
    fn threshold_modes_all_run() {
        for mode in [ThresholdMode::Global, ThresholdMode::PerTarget, ThresholdMode::TopK] {
            let spec = SweepSpec {
                threshold: mode,
                seeds: vec![3],
                epsilons: vec![None],
                baselines: vec![],
                ..small_spec()
            };
            let r = run_sweep(&spec, &SweepOptions::default()).unwrap();
            assert!(r.all_ok());
            let f1 = r.summary_for("all_ones", 2, None).unwrap().f1_mean.unwrap();
            assert!(f1 > 0.5, "{mode:?}: {f1}");
        }
    }

    #[test]
    fn pool_too_small_fails_cells() {
        let spec = SweepSpec {
            num_targets: 500,
            seeds: vec![1],
            epsilons: vec![None],
            baselines: vec![],
            ..small_spec()
        };
        let r = run_sweep(&spec, &SweepOptions::default()).unwrap();
        assert!(r.runs.iter().all(|r| !r.ok()));
        assert!(r.runs[0].error.as_ref().unwrap().contains("pool"));
    }
}
