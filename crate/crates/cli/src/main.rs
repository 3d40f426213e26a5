use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nils::attack::{run_attack, AttackInput, StrategyKind, ThresholdPolicy};
use nils::dp::{dp_audit, AuditReport, BudgetLedger, LapGraphConfig, LapGraphMechanism, NeighborRelation};
use nils::gcn::{accuracy, train, GcnModel, TrainConfig};
use nils::generate::{generate_sbm, FeatureSpec, SbmSpec};
use nils::graph::{Graph, NodeId};
use nils::harness::{run_sweep, sample_targets, split_nodes, utility_eval, verify_dir, GraphSource, SamplingRegime, SweepOptions, SweepSpec};
use nils::io::{load_graph, save_graph};
use nils::rng;
use nils::server::{release_training_graph, Server};

const EDGES: &str = "edges.txt";
const FEATURES: &str = "features.csv";
const LABELS: &str = "labels.txt";

#[derive(Parser)]
#[command(name = "nils", version, about = "Node-injection link stealing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an SBM graph (edges.txt, features.csv, labels.txt) into a directory.
    Generate {
        /// Spec file; only the graph.* keys are used.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a GCN on a graph directory and write the model file.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 0.1)]
        learning_rate: f64,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
        #[arg(long, default_value_t = 5e-3)]
        l2: f64,
        #[arg(long, default_value_t = 6f64.sqrt())]
        init_scale: f64,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One NILS attack; prints a JSON summary.
    Attack {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Node whose neighbours are sought.
        #[arg(long)]
        target: usize,
        /// Comma-separated target set; sampled uniformly when absent.
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<usize>>,
        /// Size of the sampled target set.
        #[arg(long, default_value_t = 50)]
        num_targets: usize,
        #[arg(long, default_value = "all_ones")]
        strategy: StrategyKind,
        /// `optimal`, `fixed:<R>` or `top:<k>`.
        #[arg(long, default_value = "optimal")]
        threshold: String,
        /// Serve through LapGraph at this budget.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a sweep spec and write result CSVs into a directory.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Log every predict/connect query to trace.jsonl.
        #[arg(long)]
        trace: bool,
    },
    /// Empirical privacy audit of LapGraph; prints CSV.
    Audit {
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = Relation::EdgeLevel)]
        relation: Relation,
        /// Graph directory; a small SBM when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Relation {
    EdgeLevel,
    NodeLevel,
    OneNodeOneEdge,
}

impl From<Relation> for NeighborRelation {
    fn from(r: Relation) -> Self {
        match r {
            Relation::EdgeLevel => NeighborRelation::EdgeLevel,
            Relation::NodeLevel => NeighborRelation::NodeLevel,
            Relation::OneNodeOneEdge => NeighborRelation::OneNodeOneEdge,
        }
    }
}

fn load_dir(dir: &Path) -> Result<Graph> {
    load_graph(&dir.join(EDGES), &dir.join(FEATURES), Some(&dir.join(LABELS)))
        .with_context(|| format!("loading graph from {}", dir.display()))
}

fn read_spec(path: &Path) -> Result<SweepSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SweepSpec::parse(&text)?)
}

fn parse_policy(s: &str) -> Result<ThresholdPolicy> {
    Ok(match s.split_once(':') {
        None if s == "optimal" => ThresholdPolicy::Optimal,
        Some(("fixed", r)) => ThresholdPolicy::Fixed(r.parse().context("threshold value")?),
        Some(("top", k)) => ThresholdPolicy::TopK(k.parse().context("top-k count")?),
        _ => bail!("threshold must be optimal, fixed:<R> or top:<k>, got {s:?}"),
    })
}

fn generate(spec: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let sbm: SbmSpec = match spec.map(read_spec).transpose()?.unwrap_or_default().graph {
        GraphSource::Sbm(s) => s,
        GraphSource::Files { .. } => bail!("generate needs an SBM spec, not graph files"),
    };
    let g = generate_sbm(seed, &sbm)?;
    fs::create_dir_all(out)?;
    save_graph(&g, &out.join(EDGES), &out.join(FEATURES), Some(&out.join(LABELS)))?;
    eprintln!("{} nodes, {} edges -> {}", g.num_nodes(), g.num_edges(), out.display());
    Ok(())
}

fn train_cmd(graph: &Path, depth: usize, hidden: usize, cfg: TrainConfig, fraction: f64, out: &Path) -> Result<()> {
    let g = load_dir(graph)?;
    let (mask, heldout) = split_nodes(g.num_nodes(), fraction, &mut rng::stream(cfg.seed, 2))?;
    let model = train(&g, depth, &vec![hidden; depth.saturating_sub(1)], &cfg, &mask)?;
    fs::write(out, model.to_text()).with_context(|| format!("writing {}", out.display()))?;
    let server = Server::new(g.clone(), Arc::new(model.clone()))?;
    let labels = g.labels().context("graph has no labels")?;
    let summary = serde_json::json!({
        "train_accuracy": accuracy(server.all_predictions(), labels, &mask),
        "heldout_macro_f1": utility_eval(&g, &model, &heldout)?,
    });
    println!("{summary}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn attack_cmd(
    graph: &Path,
    model: &Path,
    target: usize,
    targets: Option<Vec<usize>>,
    num_targets: usize,
    strategy: StrategyKind,
    threshold: &str,
    epsilon: Option<f64>,
    seed: u64,
) -> Result<()> {
    let g = load_dir(graph)?;
    let text = fs::read_to_string(model).with_context(|| format!("reading {}", model.display()))?;
    let model = Arc::new(GcnModel::from_text(&text)?);
    let policy = parse_policy(threshold)?;
    let targets: Vec<NodeId> = match targets {
        Some(t) => t.into_iter().map(NodeId).collect(),
        None => {
            let mut t = sample_targets(g.adjacency(), SamplingRegime::Uniform, num_targets, &mut rng::stream(seed, 3))?;
            if !t.contains(&NodeId(target)) {
                // keep the size; swap the last sampled node for v_t
                t.pop();
                t.push(NodeId(target));
                t.sort_unstable();
            }
            t
        }
    };
    let idx: Vec<usize> = targets.iter().map(|t| t.0).collect();
    g.check_node(NodeId(target))?;
    if let Some(&bad) = idx.iter().find(|&&i| i >= g.num_nodes()) {
        bail!("target {bad} is not a node of the graph");
    }
    let knowledge = g.features().select_rows(&idx);
    let truth: Vec<NodeId> = g.adjacency().neighbors(target).iter().map(|&v| NodeId(v)).collect();
    let input = AttackInput {
        targets: &targets,
        target: NodeId(target),
        knowledge: Some(&knowledge),
        feature_dim: g.feature_dim(),
    };
    let mut server = match epsilon {
        None => Server::new(g.clone(), model)?,
        Some(eps) => {
            let cfg = LapGraphConfig::new(eps);
            let mut r = rng::stream(seed, 4);
            let mut ledger = BudgetLedger::new();
            let released = release_training_graph(&g, &cfg, &mut r, &mut ledger)?;
            Server::defended(g.clone(), model, cfg, &released, ledger, r)?
        }
    };
    let result = run_attack(&mut server, &input, strategy, policy, Some(&truth))?;
    let out = serde_json::json!({
        "strategy": strategy.to_string(),
        "epsilon": epsilon,
        "result": result,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn sweep_cmd(spec: &Path, out: &Path, trace: bool) -> Result<bool> {
    let spec = read_spec(spec)?;
    let result = run_sweep(&spec, &SweepOptions::from_env(trace)?)?;
    result.write(out)?;
    verify_dir(out)?;
    let failed: Vec<_> = result.runs.iter().filter(|r| !r.ok()).collect();
    for r in &failed {
        eprintln!(
            "failed: {} depth {} seed {}: {}",
            r.strategy,
            r.depth,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    eprintln!("{} runs, {} failed -> {}", result.runs.len(), failed.len(), out.display());
    Ok(failed.is_empty())
}

fn audit_cmd(epsilons: &[f64], trials: usize, relation: Relation, graph: Option<&Path>, seed: u64) -> Result<bool> {
    let base = match graph {
        Some(dir) => load_dir(dir)?,
        None => generate_sbm(
            seed,
            &SbmSpec {
                block_sizes: vec![6, 6],
                p_in: 0.5,
                p_out: 0.1,
                features: FeatureSpec::default(),
            },
        )?,
    };
    let mut r = rng::stream(seed, 5);
    let mut consistent = true;
    println!("{},relation,consistent", AuditReport::CSV_HEADER);
    for &eps in epsilons {
        let mech = LapGraphMechanism(LapGraphConfig::new(eps));
        let rep = dp_audit(&mech, relation.into(), &base, eps, trials, &mut r)?;
        consistent &= rep.consistent_with_claim();
        println!("{},{:?},{}", rep.csv_row(), rep.relation, rep.consistent_with_claim());
    }
    Ok(consistent)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { spec, seed, out } => generate(spec.as_deref(), seed, &out).map(|_| true),
        Command::Train {
            graph,
            depth,
            hidden,
            learning_rate,
            epochs,
            l2,
            init_scale,
            train_fraction,
            seed,
            out,
        } => {
            let cfg = TrainConfig {
                learning_rate,
                epochs,
                weight_init_scale: init_scale,
                seed,
                l2,
            };
            train_cmd(&graph, depth, hidden, cfg, train_fraction, &out).map(|_| true)
        }
        Command::Attack {
            graph,
            model,
            target,
            targets,
            num_targets,
            strategy,
            threshold,
            epsilon,
            seed,
        } => attack_cmd(&graph, &model, target, targets, num_targets, strategy, &threshold, epsilon, seed).map(|_| true),
        Command::Sweep { spec, out, trace } => sweep_cmd(&spec, &out, trace),
        Command::Audit {
            epsilons,
            trials,
            relation,
            graph,
            seed,
        } => audit_cmd(&epsilons, trials, relation, graph.as_deref(), seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
