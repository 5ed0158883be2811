//! Command-line pipeline: validate, walk, train, distill, eval, explain,
//! synth, sweep, rerun.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gascom::embed::{Encoder, FileProvider, ToyProvider};
use gascom::graph::{validate_tree, NodeId};
use gascom::manifest::{sha256_file, RunManifest};
use gascom::model::{Checkpoint, TaskMode};
use gascom::train::{
    evaluate, split_instances, train, train_self_distilled, Corpus, SplitSpec, TrainConfig,
};
use gascom::walks::{select_context, WalkConfig, WalkStrategy};

#[derive(Parser)]
#[command(name = "gascom", version, about = "Semantic-aware graph walks and token-level multi-head graph attention for conversation classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and structurally validate a corpus.
    Validate(ValidateArgs),
    /// Emit context selections for labeled nodes as JSON lines.
    Walk(WalkArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Two-phase self-distillation training.
    Distill(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Dump node- and token-level attention weights for one target.
    Explain(ExplainArgs),
    /// Generate a synthetic context-dependent corpus.
    Synth(SynthArgs),
    /// Train/evaluate a grid of (L, strategy) cells.
    Sweep(SweepArgs),
    /// Re-execute a command from its run manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Seed; falls back to the GASCOM_SEED environment variable, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key=value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parallel example evaluation cap. Output ordering is fixed
    /// regardless of this value.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Where to write the run manifest (default: <output stem>.manifest.json
    /// or gascom-manifest.json).
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Clone)]
struct WalkArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "sim-rw")]
    strategy: String,
    #[arg(long = "L", default_value_t = 6)]
    l: usize,
    /// Restrict to one target node id.
    #[arg(long)]
    target: Option<String>,
    /// Checkpoint backing attention-modulated strategies.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Similarity-walk embeddings: "toy" or an embedding file path.
    #[arg(long, default_value = "toy")]
    sim_embeddings: String,
    #[arg(long, default_value_t = 0.75)]
    root_bias: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "sim-rw")]
    strategy: String,
    #[arg(long = "L", default_value_t = 6)]
    l: usize,
    #[arg(long, default_value = "hate")]
    task: String,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.10)]
    warmup_fraction: f64,
    #[arg(long, default_value_t = 4)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 5)]
    heads: usize,
    /// Classification embeddings: "toy" or an embedding file path.
    #[arg(long, default_value = "toy")]
    embeddings: String,
    #[arg(long, default_value = "toy")]
    sim_embeddings: String,
    /// Ablation: train without conversational context (u-only).
    #[arg(long, action = clap::ArgAction::Set, default_value_t = false)]
    context_free: bool,
    /// Split whole discussions instead of instances.
    #[arg(long, action = clap::ArgAction::Set, default_value_t = false)]
    split_by_discussion: bool,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Per-epoch log output (JSON).
    #[arg(long)]
    log_out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "sim-rw")]
    strategy: String,
    #[arg(long = "L", default_value_t = 6)]
    l: usize,
    #[arg(long, default_value = "toy")]
    sim_embeddings: String,
    #[arg(long, action = clap::ArgAction::Set, default_value_t = false)]
    split_by_discussion: bool,
    /// Evaluate the train split instead of the test split.
    #[arg(long, action = clap::ArgAction::Set, default_value_t = false)]
    train_split: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Assertions key=threshold (e.g. accuracy=0.9); exit nonzero when a
    /// metric falls below its threshold.
    #[arg(long = "assert")]
    assertions: Vec<String>,
}

#[derive(Args, Clone)]
struct ExplainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "sim-rw")]
    strategy: String,
    #[arg(long = "L", default_value_t = 6)]
    l: usize,
    #[arg(long, default_value = "toy")]
    sim_embeddings: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SynthArgs {
    /// Output corpus path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    discussions: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated walk lengths, e.g. 4,6.
    #[arg(long = "L-values", default_value = "4,6")]
    l_values: String,
    /// Comma-separated strategy names.
    #[arg(long, default_value = "sim-rw,parent-child")]
    strategies: String,
    #[arg(long, default_value = "hate")]
    task: String,
    #[arg(long, default_value_t = 4)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 5)]
    heads: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
}

fn resolve_seed(explicit: Option<u64>) -> u64 {
    explicit
        .or_else(|| {
            std::env::var("GASCOM_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0)
}

/// Flat key=value config file; returns overrides applied before CLI flags.
fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("config {path:?}: {e}"))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config {path:?} line {}: expected key=value", i + 1))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Re-parse argv with config-file values injected as defaults: config keys
/// that match long flag names are prepended unless the flag is already
/// present on the command line.
fn apply_config(argv: &mut Vec<String>, config: &BTreeMap<String, String>) {
    for (k, v) in config {
        let flag = format!("--{k}");
        if !argv.iter().any(|a| *a == flag) {
            argv.push(flag);
            argv.push(v.clone());
        }
    }
}

fn load_sim_provider(spec: &str, seed: u64, d_model: usize) -> Result<Encoder, String> {
    if spec == "toy" {
        Ok(Encoder::Toy(ToyProvider::new(seed, d_model)))
    } else {
        FileProvider::from_path(Path::new(spec))
            .map(Encoder::File)
            .map_err(|e| e.to_string())
    }
}

fn setup_jobs(jobs: usize) {
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .ok();
    }
}

fn write_output(path: Option<&Path>, content: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| format!("write {p:?}: {e}")),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn manifest_path(explicit: Option<&Path>, out: Option<&Path>, command: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match out {
        Some(o) => o.with_extension("manifest.json"),
        None => PathBuf::from(format!("gascom-{command}.manifest.json")),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match run(argv) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(mut argv: Vec<String>) -> Result<ExitCode, String> {
    // pre-scan for --config so its values can act as defaults
    if let Some(pos) = argv.iter().position(|a| a == "--config") {
        if let Some(path) = argv.get(pos + 1).cloned() {
            let config = load_config_file(Path::new(&path))?;
            apply_config(&mut argv, &config);
        }
    }
    let cli = Cli::try_parse_from(&argv).map_err(|e| e.to_string())?;
    match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Walk(args) => cmd_walk(args),
        Command::Train(args) => cmd_train(args, false),
        Command::Distill(args) => cmd_train(args, true),
        Command::Eval(args) => cmd_eval(args),
        Command::Explain(args) => cmd_explain(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Rerun(args) => {
            let manifest = RunManifest::load(&args.manifest).map_err(|e| e.to_string())?;
            let mut argv = vec!["gascom".to_string()];
            argv.extend(manifest.to_argv());
            run(argv)
        }
    }
}

fn base_manifest(command: &str, common: &CommonArgs, seed: u64) -> Result<RunManifest, String> {
    let mut m = RunManifest::new(command, seed);
    m.arg("corpus", common.corpus.display());
    m.arg("seed", seed);
    m.corpus_digest = Some(sha256_file(&common.corpus).map_err(|e| e.to_string())?);
    Ok(m)
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode, String> {
    let seed = resolve_seed(args.common.seed);
    let text = std::fs::read_to_string(&args.common.corpus)
        .map_err(|e| format!("read {:?}: {e}", args.common.corpus))?;
    let mut clean = true;
    let mut count = 0usize;
    match gascom::graph::parse_discussions(text.as_bytes()) {
        Ok(discussions) => {
            for d in &discussions {
                count += 1;
                let report = validate_tree(d);
                if !report.is_empty() {
                    clean = false;
                    for v in report {
                        println!(
                            "{}: {}",
                            d.discussion_id,
                            serde_json::to_string(&v).unwrap()
                        );
                    }
                }
            }
        }
        Err(e) => {
            println!("{e}");
            clean = false;
        }
    }
    println!("{count} discussions");
    let mut manifest = base_manifest("validate", &args.common, seed)?;
    manifest.arg("jobs", args.common.jobs);
    manifest
        .save(&manifest_path(
            args.common.manifest_out.as_deref(),
            None,
            "validate",
        ))
        .map_err(|e| e.to_string())?;
    Ok(if clean { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_walk(args: WalkArgs) -> Result<ExitCode, String> {
    setup_jobs(args.common.jobs);
    let seed = resolve_seed(args.common.seed);
    let strategy: WalkStrategy = args.strategy.parse()?;
    let corpus = Corpus::from_path(&args.common.corpus).map_err(|e| e.to_string())?;
    let sim = load_sim_provider(&args.sim_embeddings, seed, 64)?;
    let checkpoint = args
        .checkpoint
        .as_deref()
        .map(Checkpoint::load_from_path)
        .transpose()
        .map_err(|e| e.to_string())?;
    let mut cfg = WalkConfig::new(args.l, seed);
    cfg.p = args.root_bias;
    let mut lines = String::new();
    for d in &corpus.discussions {
        for node in d.labeled_nodes() {
            if let Some(t) = &args.target {
                if node.id.as_str() != t {
                    continue;
                }
            }
            let sel = select_context(d, &node.id, &cfg, strategy, &sim, checkpoint.as_ref(), 128)
                .map_err(|e| e.to_string())?;
            lines.push_str(&sel.to_json_line());
            lines.push('\n');
        }
    }
    if args.target.is_some() && lines.is_empty() {
        return Err(format!("target {:?} not found", args.target.unwrap()));
    }
    write_output(args.out.as_deref(), &lines)?;
    let mut manifest = base_manifest("walk", &args.common, seed)?;
    manifest
        .arg("strategy", &args.strategy)
        .arg("L", args.l)
        .arg("root-bias", args.root_bias)
        .arg("sim-embeddings", &args.sim_embeddings)
        .arg("jobs", args.common.jobs);
    if let Some(t) = &args.target {
        manifest.arg("target", t);
    }
    if let Some(c) = &args.checkpoint {
        manifest.arg("checkpoint", c.display());
    }
    if let Some(o) = &args.out {
        manifest.arg("out", o.display());
    }
    manifest
        .save(&manifest_path(
            args.common.manifest_out.as_deref(),
            args.out.as_deref(),
            "walk",
        ))
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn train_config_from(args: &TrainArgs, seed: u64) -> Result<TrainConfig, String> {
    let strategy: WalkStrategy = args.strategy.parse()?;
    let task: TaskMode = args.task.parse()?;
    Ok(TrainConfig {
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        warmup_fraction: args.warmup_fraction,
        epochs: args.epochs,
        seed,
        task,
        walk: WalkConfig::new(args.l, seed),
        strategy,
        d_model: args.d_model,
        heads: args.heads,
        context_free: args.context_free,
        ..TrainConfig::default()
    })
}

fn cmd_train(args: TrainArgs, distill: bool) -> Result<ExitCode, String> {
    setup_jobs(args.common.jobs);
    let seed = resolve_seed(args.common.seed);
    let mut cfg = train_config_from(&args, seed)?;
    if args.embeddings != "toy" {
        // frozen pretrained vectors: only the attention/classifier weights train
        let file = FileProvider::from_path(Path::new(&args.embeddings))
            .map_err(|e| e.to_string())?;
        cfg.d_model = file.d_model;
        cfg.class_encoder = Some(Encoder::File(file));
    }
    let corpus = Corpus::from_path(&args.common.corpus).map_err(|e| e.to_string())?;
    let sim = load_sim_provider(&args.sim_embeddings, seed, cfg.d_model)?;
    let split = SplitSpec {
        seed,
        by_discussion: args.split_by_discussion,
        ..SplitSpec::default()
    };
    let (train_set, test_set) = split_instances(&corpus, &split);
    let (result, log_phase1) = if distill {
        let (p1, p2) = train_self_distilled(&corpus, &cfg, &train_set, &test_set, &sim)
            .map_err(|e| e.to_string())?;
        (p2, Some(p1.epochs))
    } else {
        (
            train(&corpus, &cfg, &train_set, &test_set, &sim, None).map_err(|e| e.to_string())?,
            None,
        )
    };
    result
        .checkpoint
        .save_to_path(&args.checkpoint)
        .map_err(|e| e.to_string())?;
    #[derive(Serialize)]
    struct FullLog<'a> {
        phase1: Option<&'a Vec<gascom::train::EpochLog>>,
        epochs: &'a Vec<gascom::train::EpochLog>,
        feature_dim: usize,
    }
    let log = serde_json::to_string_pretty(&FullLog {
        phase1: log_phase1.as_ref(),
        epochs: &result.epochs,
        feature_dim: result.checkpoint.params.dims.feature_dim(),
    })
    .unwrap();
    match &args.log_out {
        Some(p) => std::fs::write(p, &log).map_err(|e| e.to_string())?,
        None => println!("{log}"),
    }
    let command = if distill { "distill" } else { "train" };
    let mut manifest = base_manifest(command, &args.common, seed)?;
    manifest
        .arg("strategy", &args.strategy)
        .arg("L", args.l)
        .arg("task", &args.task)
        .arg("batch-size", args.batch_size)
        .arg("learning-rate", args.learning_rate)
        .arg("warmup-fraction", args.warmup_fraction)
        .arg("epochs", args.epochs)
        .arg("d-model", args.d_model)
        .arg("heads", args.heads)
        .arg("embeddings", &args.embeddings)
        .arg("sim-embeddings", &args.sim_embeddings)
        .arg("context-free", args.context_free)
        .arg("split-by-discussion", args.split_by_discussion)
        .arg("checkpoint", args.checkpoint.display())
        .arg("jobs", args.common.jobs);
    if let Some(p) = &args.log_out {
        manifest.arg("log-out", p.display());
    }
    manifest
        .save(&manifest_path(
            args.common.manifest_out.as_deref(),
            Some(&args.checkpoint),
            command,
        ))
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, String> {
    setup_jobs(args.common.jobs);
    let seed = resolve_seed(args.common.seed);
    let checkpoint = Checkpoint::load_from_path(&args.checkpoint).map_err(|e| e.to_string())?;
    let strategy: WalkStrategy = args.strategy.parse()?;
    let corpus = Corpus::from_path(&args.common.corpus).map_err(|e| e.to_string())?;
    let d_model = checkpoint.params.dims.d_model;
    let sim = load_sim_provider(&args.sim_embeddings, seed, d_model)?;
    let split = SplitSpec {
        seed,
        by_discussion: args.split_by_discussion,
        ..SplitSpec::default()
    };
    let (train_set, test_set) = split_instances(&corpus, &split);
    let instances = if args.train_split { &train_set } else { &test_set };
    let cfg = TrainConfig {
        seed,
        task: checkpoint.task,
        walk: WalkConfig::new(args.l, seed),
        strategy,
        d_model,
        heads: checkpoint.params.dims.heads,
        t_max: checkpoint.t_max,
        ..TrainConfig::default()
    };
    let scorer = if strategy.needs_model() {
        Some(&checkpoint)
    } else {
        None
    };
    let report = evaluate(&checkpoint, &corpus, instances, &cfg, &sim, scorer)
        .map_err(|e| e.to_string())?;
    // fixed-order metric table
    let mut table = String::new();
    table.push_str(&format!("accuracy  {:.4}\n", report.accuracy));
    table.push_str(&format!("macro_f1  {:.4}\n", report.macro_f1));
    table.push_str(&format!("precision {:.4}\n", report.precision));
    table.push_str(&format!("recall    {:.4}\n", report.recall));
    table.push_str(&format!("pr_auc    {:.4}\n", report.pr_auc));
    print!("{table}");
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&report).unwrap())
            .map_err(|e| e.to_string())?;
    }
    let mut manifest = base_manifest("eval", &args.common, seed)?;
    manifest
        .arg("checkpoint", args.checkpoint.display())
        .arg("strategy", &args.strategy)
        .arg("L", args.l)
        .arg("sim-embeddings", &args.sim_embeddings)
        .arg("train-split", args.train_split)
        .arg("split-by-discussion", args.split_by_discussion)
        .arg("jobs", args.common.jobs);
    if let Some(o) = &args.out {
        manifest.arg("out", o.display());
    }
    manifest
        .save(&manifest_path(
            args.common.manifest_out.as_deref(),
            args.out.as_deref(),
            "eval",
        ))
        .map_err(|e| e.to_string())?;
    // threshold assertions
    let mut failed = false;
    for assertion in &args.assertions {
        let (key, threshold) = assertion
            .split_once('=')
            .ok_or_else(|| format!("bad --assert {assertion:?}, expected key=threshold"))?;
        let threshold: f64 = threshold
            .parse()
            .map_err(|_| format!("bad threshold in {assertion:?}"))?;
        let value = match key {
            "accuracy" => report.accuracy,
            "macro_f1" => report.macro_f1,
            "precision" => report.precision,
            "recall" => report.recall,
            "pr_auc" => report.pr_auc,
            other => return Err(format!("unknown metric {other:?}")),
        };
        if value < threshold {
            eprintln!("assert failed: {key} = {value:.4} < {threshold}");
            failed = true;
        }
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_explain(args: ExplainArgs) -> Result<ExitCode, String> {
    setup_jobs(args.common.jobs);
    let seed = resolve_seed(args.common.seed);
    let checkpoint = Checkpoint::load_from_path(&args.checkpoint).map_err(|e| e.to_string())?;
    let strategy: WalkStrategy = args.strategy.parse()?;
    let corpus = Corpus::from_path(&args.common.corpus).map_err(|e| e.to_string())?;
    let sim = load_sim_provider(&args.sim_embeddings, seed, checkpoint.params.dims.d_model)?;
    let target = NodeId::new(args.target.clone());
    let discussion = corpus
        .discussions
        .iter()
        .find(|d| d.contains(&target))
        .ok_or_else(|| format!("target {:?} not found", args.target))?;
    let cfg = WalkConfig::new(args.l, seed);
    let scorer = if strategy.needs_model() {
        Some(&checkpoint)
    } else {
        None
    };
    let selection = select_context(
        discussion,
        &target,
        &cfg,
        strategy,
        &sim,
        scorer,
        checkpoint.t_max,
    )
    .map_err(|e| e.to_string())?;
    let (out, _) = gascom::model::forward(
        &checkpoint.params,
        &checkpoint.encoder,
        discussion,
        &target,
        &selection,
        checkpoint.task,
        checkpoint.t_max,
    )
    .map_err(|e| e.to_string())?;
    let report = explain_report(&checkpoint, &sim, discussion, &target, &selection, &out)
        .map_err(|e| e.to_string())?;
    let json = serde_json::to_string_pretty(&report).unwrap();
    write_output(args.out.as_deref(), &json)?;
    let mut manifest = base_manifest("explain", &args.common, seed)?;
    manifest
        .arg("checkpoint", args.checkpoint.display())
        .arg("target", &args.target)
        .arg("strategy", &args.strategy)
        .arg("L", args.l)
        .arg("sim-embeddings", &args.sim_embeddings)
        .arg("jobs", args.common.jobs);
    if let Some(o) = &args.out {
        manifest.arg("out", o.display());
    }
    manifest
        .save(&manifest_path(
            args.common.manifest_out.as_deref(),
            args.out.as_deref(),
            "explain",
        ))
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ExplainNode {
    id: String,
    /// Attention mass averaged over heads and query tokens, normalized over
    /// context nodes.
    aggregate_attention: f64,
    /// Cosine similarity of this node's post to the target's parent.
    parent_similarity: f64,
    /// Per key-token attention weight, averaged over heads and query tokens.
    token_weights: Vec<f64>,
}

#[derive(Serialize)]
struct ExplainReport {
    target: String,
    probabilities: [f64; 2],
    nodes: Vec<ExplainNode>,
}

fn explain_report(
    checkpoint: &Checkpoint,
    sim: &Encoder,
    discussion: &gascom::graph::Discussion,
    target: &NodeId,
    selection: &gascom::walks::ContextSelection,
    out: &gascom::model::ForwardOutput,
) -> Result<ExplainReport, Box<dyn std::error::Error>> {
    let parent_id = selection
        .ordered_nodes
        .first()
        .map(|(n, _)| n.clone())
        .unwrap_or_else(|| target.clone());
    let parent_vec = gascom::embed::sentence_embedding(
        sim,
        &discussion.node(&parent_id)?.text,
        checkpoint.t_max,
    )?;
    // per-node mean attention mass over heads and query tokens; normalize
    // across nodes so aggregates sum to 1
    let mut raw: Vec<(String, f64, Vec<f64>)> = Vec::new();
    for nt in &out.trace.nodes {
        let t_key = nt.per_head[0].cols();
        let mut token_weights = vec![0.0; t_key];
        let mut denom = 0usize;
        for head in &nt.per_head {
            for r in 0..head.rows() {
                for c in 0..t_key {
                    token_weights[c] += head.get(r, c);
                }
            }
            denom += head.rows();
        }
        for w in &mut token_weights {
            *w /= denom as f64;
        }
        // rows sum to 1, so every node's mean mass is 1; weight nodes by
        // their mean per-token concentration instead: total stays
        // comparable via the node-level score below
        let node_score = gascom::model::node_attention_score(
            &checkpoint.params,
            &gascom::embed::embed_tokens(
                &checkpoint.encoder,
                &gascom::embed::tokenize(&discussion.node(&parent_id)?.text, checkpoint.t_max),
            )?,
            &gascom::embed::embed_tokens(
                &checkpoint.encoder,
                &gascom::embed::tokenize(
                    &discussion.node(&NodeId::new(nt.node.as_str()))?.text,
                    checkpoint.t_max,
                ),
            )?,
        );
        raw.push((nt.node.as_str().to_string(), node_score, token_weights));
    }
    let total: f64 = raw.iter().map(|(_, s, _)| s).sum();
    let mut nodes = Vec::new();
    for (id, score, mut token_weights) in raw {
        let aggregate = if total == 0.0 { 0.0 } else { score / total };
        // scale token weights so they sum to the node's aggregate
        let tw_sum: f64 = token_weights.iter().sum();
        if tw_sum > 0.0 {
            for w in &mut token_weights {
                *w *= aggregate / tw_sum;
            }
        }
        let node_vec = gascom::embed::sentence_embedding(
            sim,
            &discussion.node(&NodeId::new(id.clone()))?.text,
            checkpoint.t_max,
        )?;
        nodes.push(ExplainNode {
            id,
            aggregate_attention: aggregate,
            parent_similarity: gascom::embed::cosine_similarity(&parent_vec, &node_vec),
            token_weights,
        });
    }
    Ok(ExplainReport {
        target: target.as_str().to_string(),
        probabilities: out.probabilities,
        nodes,
    })
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode, String> {
    let seed = resolve_seed(args.seed);
    let corpus = gascom::synth::generate_synthetic_corpus(&gascom::synth::SynthSpec {
        discussions: args.discussions,
        seed,
    });
    let jsonl = gascom::synth::corpus_to_jsonl(&corpus);
    std::fs::write(&args.out, &jsonl).map_err(|e| e.to_string())?;
    let mut manifest = RunManifest::new("synth", seed);
    manifest
        .arg("out", args.out.display())
        .arg("discussions", args.discussions)
        .arg("seed", seed);
    manifest
        .save(&manifest_path(
            args.manifest_out.as_deref(),
            Some(&args.out),
            "synth",
        ))
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SweepCell {
    l: usize,
    strategy: String,
    accuracy: f64,
    macro_f1: f64,
    pr_auc: f64,
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, String> {
    setup_jobs(args.common.jobs);
    let seed = resolve_seed(args.common.seed);
    let task: TaskMode = args.task.parse()?;
    let l_values: Vec<usize> = args
        .l_values
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("bad L value {v:?}")))
        .collect::<Result<_, String>>()?;
    let strategies: Vec<WalkStrategy> = args
        .strategies
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, String>>()?;
    let corpus = Corpus::from_path(&args.common.corpus).map_err(|e| e.to_string())?;
    let sim = Encoder::Toy(ToyProvider::new(seed, args.d_model));
    let split = SplitSpec {
        seed,
        ..SplitSpec::default()
    };
    let (train_set, test_set) = split_instances(&corpus, &split);
    let mut cells = Vec::new();
    for &l in &l_values {
        for &strategy in &strategies {
            let cfg = TrainConfig {
                seed,
                task,
                epochs: args.epochs,
                learning_rate: args.learning_rate,
                walk: WalkConfig::new(l, seed),
                strategy,
                d_model: args.d_model,
                heads: args.heads,
                ..TrainConfig::default()
            };
            let result = if strategy.needs_model() {
                let mut cfg1 = cfg.clone();
                cfg1.strategy = WalkStrategy::SimilarityRandom;
                let (_, p2) =
                    train_self_distilled(&corpus, &cfg1, &train_set, &test_set, &sim)
                        .map_err(|e| e.to_string())?;
                p2
            } else {
                train(&corpus, &cfg, &train_set, &test_set, &sim, None)
                    .map_err(|e| e.to_string())?
            };
            let eval = &result.epochs.last().unwrap().eval;
            cells.push(SweepCell {
                l,
                strategy: strategy.cli_name().to_string(),
                accuracy: eval.accuracy,
                macro_f1: eval.macro_f1,
                pr_auc: eval.pr_auc,
            });
        }
    }
    let json = serde_json::to_string_pretty(&cells).unwrap();
    write_output(args.out.as_deref(), &json)?;
    let mut manifest = base_manifest("sweep", &args.common, seed)?;
    manifest
        .arg("L-values", &args.l_values)
        .arg("strategies", &args.strategies)
        .arg("task", &args.task)
        .arg("epochs", args.epochs)
        .arg("d-model", args.d_model)
        .arg("heads", args.heads)
        .arg("learning-rate", args.learning_rate)
        .arg("jobs", args.common.jobs);
    if let Some(o) = &args.out {
        manifest.arg("out", o.display());
    }
    manifest
        .save(&manifest_path(
            args.common.manifest_out.as_deref(),
            args.out.as_deref(),
            "sweep",
        ))
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}
