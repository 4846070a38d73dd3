//! The `relex` command line: config-driven dataset generation, black-box
//! training, explanation, benchmarking, and DOT export.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 completed
//! with per-node failures, 3 fatal runtime error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use relex::config::{load_run_config, BlackboxKind, DatasetKind, RunConfig};
use relex::error::Error;
use relex::eval::{read_csv, run_benchmark, write_csv, MethodKind, NodeRecord};
use relex::explain::{explain_node_diverse, Explanation, MaskKind};
use relex::formats::{
    explanation_from_json, explanation_to_dot, explanation_to_json, gcn_to_document,
    graph_from_tsv, load_graph_json, model_from_json, model_to_json, right_reasons_document,
    right_reasons_to_json, rules_to_document, save_graph_json, AnyModel,
};
use relex::graph::{extract_ego, Graph};
use relex::rng::{task_rng, TaskPurpose};
use relex::synth::{generate, LabeledGraph};

const EXIT_USAGE: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_FATAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "relex",
    version,
    about = "Explain black-box node classifiers on relational data"
)]
struct Cli {
    /// Run configuration file (TOML, or JSON with a .json extension).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Seed override; falls back to the config file, then RELEX_SEED,
    /// then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for node-parallel work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset.
    Generate {
        /// Dataset kind (tree-grid, tree-ba, tree-grid-ba); overrides
        /// the config and allows running without one.
        #[arg(long)]
        dataset: Option<String>,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the configured black box and save it as model.json.
    TrainBlackbox {
        /// Model family (gcn or rules); overrides the config.
        #[arg(long)]
        kind: Option<String>,
    },
    /// Explain individual nodes, writing JSON and DOT per method.
    Explain {
        /// Node ids, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        nodes: Vec<usize>,
        /// Methods, comma separated; overrides the config.
        #[arg(long)]
        methods: Option<String>,
        /// Diverse masks per node (T); overrides the config.
        #[arg(long)]
        diverse: Option<usize>,
    },
    /// Score every configured method over sampled motif nodes.
    Benchmark {
        /// Methods, comma separated; overrides the config.
        #[arg(long)]
        methods: Option<String>,
        /// Skip nodes already present in the existing report.csv.
        #[arg(long)]
        resume: bool,
        /// Record wall-clock seconds in the CSV (off by default so
        /// repeated runs are byte-identical).
        #[arg(long)]
        timings: bool,
    },
    /// Re-render a saved explanation JSON as Graphviz DOT.
    ExportDot {
        /// Explanation JSON file.
        input: PathBuf,
        /// Output path (default: the input with a .dot extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reserves 2 for usage errors; this tool uses 1.
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: failed to build thread pool: {}", e);
            return ExitCode::from(EXIT_FATAL);
        }
    }
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(EXIT_PARTIAL),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code_for(&e))
        }
    }
}

enum Outcome {
    Clean,
    Partial,
}

/// Usage-shaped errors exit 1; everything else that escapes a command
/// is fatal (3). Per-node failures never escape — they downgrade the
/// outcome to Partial instead.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::Parse(_) | Error::NodeOutOfRange { .. } => EXIT_USAGE,
        _ => EXIT_FATAL,
    }
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match &cli.command {
        Command::ExportDot { input, out } => cmd_export_dot(input, out.as_deref()),
        Command::Generate { dataset, out } => {
            let mut config = load_config_or_generate_default(&cli, dataset.as_deref())?;
            if let Some(out) = out {
                config.output_dir = out.clone();
            }
            if let Some(kind) = dataset.as_deref() {
                config.dataset.kind = parse_dataset_kind(kind)?;
            }
            let seed = resolve_seed(&cli, &config)?;
            cmd_generate(&config, seed)
        }
        command => {
            let config_path = cli.config.as_deref().ok_or_else(|| {
                Error::InvalidConfig("this subcommand requires --config".into())
            })?;
            let config = load_run_config(config_path)?;
            let seed = resolve_seed(&cli, &config)?;
            match command {
                Command::TrainBlackbox { kind } => {
                    let mut config = config;
                    if let Some(kind) = kind.as_deref() {
                        config.blackbox.kind = parse_blackbox_kind(kind)?;
                    }
                    cmd_train_blackbox(&config, seed)
                }
                Command::Explain {
                    nodes,
                    methods,
                    diverse,
                } => {
                    let mut config = config;
                    if let Some(methods) = methods.as_deref() {
                        config.explain.methods = parse_methods(methods)?;
                    }
                    if let Some(t) = diverse {
                        config.explain.diverse = *t;
                    }
                    config.validate()?;
                    cmd_explain(&config, seed, nodes)
                }
                Command::Benchmark {
                    methods,
                    resume,
                    timings,
                } => {
                    let mut config = config;
                    if let Some(methods) = methods.as_deref() {
                        config.explain.methods = parse_methods(methods)?;
                        config.validate()?;
                    }
                    cmd_benchmark(&config, seed, *resume, *timings)
                }
                Command::Generate { .. } | Command::ExportDot { .. } => unreachable!(),
            }
        }
    }
}

/// `generate` can run without a config file when --dataset names the
/// kind; everything else takes the built-in defaults.
fn load_config_or_generate_default(cli: &Cli, dataset: Option<&str>) -> Result<RunConfig, Error> {
    if let Some(path) = cli.config.as_deref() {
        return load_run_config(path);
    }
    let kind = dataset.ok_or_else(|| {
        Error::InvalidConfig("generate needs --config or --dataset".into())
    })?;
    let kind = parse_dataset_kind(kind)?;
    let text = format!(
        "output_dir = \"relex-out\"\n[dataset]\nkind = \"{}\"\n[blackbox]\nkind = \"gcn\"\n",
        match kind {
            DatasetKind::TreeGrid => "tree-grid",
            DatasetKind::TreeBa => "tree-ba",
            DatasetKind::TreeGridBa => "tree-grid-ba",
            DatasetKind::File => unreachable!("parse_dataset_kind rejects file"),
        }
    );
    relex::config::parse_run_config(&text, relex::config::ConfigFormat::Toml)
}

fn parse_dataset_kind(s: &str) -> Result<DatasetKind, Error> {
    match s {
        "tree-grid" => Ok(DatasetKind::TreeGrid),
        "tree-ba" => Ok(DatasetKind::TreeBa),
        "tree-grid-ba" => Ok(DatasetKind::TreeGridBa),
        other => Err(Error::InvalidConfig(format!(
            "unknown dataset '{}'; expected tree-grid, tree-ba, or tree-grid-ba",
            other
        ))),
    }
}

fn parse_blackbox_kind(s: &str) -> Result<BlackboxKind, Error> {
    match s {
        "gcn" => Ok(BlackboxKind::Gcn),
        "rules" => Ok(BlackboxKind::Rules),
        other => Err(Error::InvalidConfig(format!(
            "unknown model kind '{}'; expected gcn or rules",
            other
        ))),
    }
}

fn parse_methods(s: &str) -> Result<Vec<MethodKind>, Error> {
    s.split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(MethodKind::from_str)
        .collect()
}

/// CLI flag > config value > RELEX_SEED > 0.
fn resolve_seed(cli: &Cli, config: &RunConfig) -> Result<u64, Error> {
    if let Some(seed) = cli.seed {
        return Ok(seed);
    }
    let env = match std::env::var("RELEX_SEED") {
        Ok(text) => Some(text.trim().parse::<u64>().map_err(|_| {
            Error::InvalidConfig(format!("RELEX_SEED '{}' is not a 64-bit integer", text))
        })?),
        Err(_) => None,
    };
    Ok(config.effective_seed(env))
}

// ---------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Echoes the effective configuration and a timestamped metadata
/// sidecar into the output directory. The sidecar is the only output
/// that varies between identical runs.
fn echo_run(config: &RunConfig, seed: u64, command: &str) -> Result<(), Error> {
    let mut effective = config.clone();
    effective.seed = Some(seed);
    write_text(&config.output_dir.join("config.toml"), &effective.to_toml()?)?;
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let metadata = serde_json::json!({
        "command": command,
        "seed": seed,
        "unix_time": timestamp,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_text(
        &config.output_dir.join("metadata.json"),
        &serde_json::to_string_pretty(&metadata).map_err(|e| Error::Parse(e.to_string()))?,
    )
}

// ---------------------------------------------------------------------
// Dataset and model loading
// ---------------------------------------------------------------------

/// Materializes the configured dataset: synthetic kinds are generated,
/// file kinds are loaded and their ground truth reconstructed when the
/// document carries labels and motif ids.
fn load_dataset(config: &RunConfig, seed: u64) -> Result<(Graph, Option<LabeledGraph>), Error> {
    match config.dataset.kind.benchmark_kind() {
        Some(_) => {
            let (kind, synth) = config.synth_config(seed)?;
            let labeled = generate(kind, &synth)?;
            Ok((labeled.graph.clone(), Some(labeled)))
        }
        None => {
            let path = config
                .dataset
                .path
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig("dataset.path is required".into()))?;
            let cap = config.dataset.degree_feature_cap;
            let graph = if path.extension().and_then(|e| e.to_str()) == Some("json") {
                load_graph_json(&fs::read_to_string(path)?, cap)?
            } else {
                let features = config
                    .dataset
                    .features_path
                    .as_deref()
                    .map(fs::read_to_string)
                    .transpose()?;
                let labels = config
                    .dataset
                    .labels_path
                    .as_deref()
                    .map(fs::read_to_string)
                    .transpose()?;
                graph_from_tsv(
                    &fs::read_to_string(path)?,
                    features.as_deref(),
                    labels.as_deref(),
                    cap,
                )?
            };
            let labeled = if graph.labels().is_some() && graph.motif_of().is_some() {
                Some(LabeledGraph::reconstruct(graph.clone())?)
            } else {
                None
            };
            Ok((graph, labeled))
        }
    }
}

fn model_path(config: &RunConfig) -> PathBuf {
    config
        .blackbox
        .model_path
        .clone()
        .unwrap_or_else(|| config.output_dir.join("model.json"))
}

fn load_model(config: &RunConfig) -> Result<AnyModel, Error> {
    let path = model_path(config);
    if !path.exists() {
        return Err(Error::InvalidConfig(format!(
            "no trained model at {}; run train-blackbox first or set blackbox.model_path",
            path.display()
        )));
    }
    model_from_json(&fs::read_to_string(&path)?)
}

/// Rule models must be queried with their observation features; swap
/// them in so every downstream ego carries the right matrix.
fn align_features(graph: Graph, model: &AnyModel) -> Result<Graph, Error> {
    match model {
        AnyModel::Rules(rules) => {
            let x = rules.seed_features(graph.num_nodes());
            graph.with_features(x)
        }
        AnyModel::Gcn(_) => Ok(graph),
    }
}

// ---------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------

fn cmd_generate(config: &RunConfig, seed: u64) -> Result<Outcome, Error> {
    let (kind, synth) = config.synth_config(seed)?;
    let labeled = generate(kind, &synth)?;
    let graph_path = config.output_dir.join("graph.json");
    write_text(&graph_path, &save_graph_json(&labeled.graph)?)?;
    let reasons_path = config.output_dir.join("right_reasons.json");
    write_text(
        &reasons_path,
        &right_reasons_to_json(&right_reasons_document(&labeled))?,
    )?;
    echo_run(config, seed, "generate")?;

    println!(
        "dataset {}: {} nodes, {} edges, {} classes",
        kind.name(),
        labeled.graph.num_nodes(),
        labeled.graph.num_edges(),
        labeled.num_classes()
    );
    for class in 0..labeled.num_classes() {
        println!(
            "  class {}: {} nodes",
            class,
            labeled.nodes_of_class(class).len()
        );
    }
    println!(
        "wrote {} and {}",
        graph_path.display(),
        reasons_path.display()
    );
    Ok(Outcome::Clean)
}

fn cmd_train_blackbox(config: &RunConfig, seed: u64) -> Result<Outcome, Error> {
    let (graph, _) = load_dataset(config, seed)?;
    let path = model_path(config);
    let document = match config.blackbox.kind {
        BlackboxKind::Gcn => {
            let mut hyper = config.blackbox.gcn.clone();
            hyper.seed = seed;
            let labels = graph
                .labels()
                .ok_or_else(|| Error::NoLabeledNodes("gcn training".into()))?;
            let train_mask = vec![true; labels.len()];
            let (model, report) = relex::blackbox::train_gcn(&graph, &train_mask, &hyper)?;
            println!(
                "gcn trained: accuracy {:.4}, final loss {:.6}",
                report.train_accuracy, report.final_loss
            );
            gcn_to_document(&model, &hyper)
        }
        BlackboxKind::Rules => {
            let rules = &config.blackbox.rules;
            let model = relex::blackbox::RuleModel::fit(
                &graph,
                rules.seed_fraction,
                rules.rule_weights.clone(),
                rules.smoothing,
                seed,
            )?;
            println!(
                "rule model fitted: {} observed nodes, {} classes",
                model.seeds.len(),
                model.num_classes
            );
            rules_to_document(&model)
        }
    };
    write_text(&path, &model_to_json(&document)?)?;
    echo_run(config, seed, "train-blackbox")?;
    println!("wrote {}", path.display());
    Ok(Outcome::Clean)
}

fn cmd_explain(config: &RunConfig, seed: u64, nodes: &[usize]) -> Result<Outcome, Error> {
    let (graph, _) = load_dataset(config, seed)?;
    let model = load_model(config)?;
    let graph = align_features(graph, &model)?;
    let blackbox = model.blackbox();
    let dir = config.output_dir.join("explanations");
    let mut failures = 0usize;

    for &node in nodes {
        for &method in &config.explain.methods {
            match explain_one(&graph, blackbox, config, seed, node, method) {
                Ok(explanations) => {
                    let many = explanations.len() > 1;
                    for (t, expl) in explanations.iter().enumerate() {
                        let stem = if many {
                            format!("node{}-{}-t{}", node, expl.method, t)
                        } else {
                            format!("node{}-{}", node, expl.method)
                        };
                        let json_path = dir.join(format!("{}.json", stem));
                        write_text(&json_path, &explanation_to_json(expl)?)?;
                        write_text(
                            &dir.join(format!("{}.dot", stem)),
                            &explanation_to_dot(expl),
                        )?;
                        let selected = expl.edges.iter().filter(|e| e.selected).count();
                        println!(
                            "node {} {}: {} edges, {} selected -> {}",
                            node,
                            expl.method,
                            expl.edges.len(),
                            selected,
                            json_path.display()
                        );
                    }
                }
                Err(e) => {
                    eprintln!("node {} {}: {}", node, method.name(), e);
                    failures += 1;
                }
            }
        }
    }
    echo_run(config, seed, "explain")?;
    if failures > 0 {
        eprintln!("{} explanation(s) failed", failures);
        Ok(Outcome::Partial)
    } else {
        Ok(Outcome::Clean)
    }
}

fn explain_one(
    graph: &Graph,
    blackbox: &dyn relex::blackbox::BlackBoxModel,
    config: &RunConfig,
    seed: u64,
    node: usize,
    method: MethodKind,
) -> Result<Vec<Explanation>, Error> {
    match method {
        MethodKind::RelexGumbel | MethodKind::RelexSigmoid => {
            let mut opts = config.explain.relex.clone();
            opts.seed = seed;
            opts.mask.kind = if method == MethodKind::RelexGumbel {
                MaskKind::Gumbel
            } else {
                MaskKind::Sigmoid
            };
            explain_node_diverse(blackbox, graph, node, &opts, config.explain.diverse)
        }
        MethodKind::Anchors => {
            let ego = extract_ego(graph, node, config.explain.relex.hops)?;
            let mut rng = task_rng(seed, node, TaskPurpose::Anchors);
            let mut expl = relex::baselines::relational_anchors(
                blackbox,
                &ego,
                &config.explain.anchors,
                &mut rng,
            )?;
            expl.seed = seed;
            Ok(vec![expl])
        }
        MethodKind::Saliency => {
            let ego = extract_ego(graph, node, config.explain.relex.hops)?;
            let mut expl = relex::baselines::saliency_explain(blackbox, &ego)?;
            expl.seed = seed;
            Ok(vec![expl])
        }
        MethodKind::Random => {
            let ego = extract_ego(graph, node, config.explain.relex.hops)?;
            let mut rng = task_rng(seed, node, TaskPurpose::RandomBaseline);
            let mut expl = relex::baselines::uniform_random_explanation(&ego, &mut rng);
            expl.seed = seed;
            Ok(vec![expl])
        }
    }
}

fn cmd_benchmark(
    config: &RunConfig,
    seed: u64,
    resume: bool,
    timings: bool,
) -> Result<Outcome, Error> {
    let (_, labeled) = load_dataset(config, seed)?;
    let labeled = labeled.ok_or_else(|| {
        Error::InvalidConfig(
            "benchmarking needs ground truth: a synthetic dataset, or a file with labels and motifs"
                .into(),
        )
    })?;
    let model = load_model(config)?;
    let graph = align_features(labeled.graph.clone(), &model)?;
    let labeled = LabeledGraph {
        graph,
        ..labeled
    };

    let report_path = config.output_dir.join("report.csv");
    let mut records: Vec<NodeRecord> = Vec::new();
    let mut exclude = BTreeSet::new();
    if resume && report_path.exists() {
        records = read_csv(fs::read_to_string(&report_path)?.as_bytes())?;
        exclude = records.iter().map(|r| r.node).collect();
        println!(
            "resuming: {} nodes already in {}",
            exclude.len(),
            report_path.display()
        );
    }

    let settings = config.benchmark_settings(seed);
    let report = run_benchmark(&labeled, model.blackbox(), &settings, &exclude)?;
    records.extend(report.records.iter().cloned());
    records.sort_by_key(|r| r.node);

    let mut csv = Vec::new();
    write_csv(&records, timings, &mut csv)?;
    write_text(&report_path, std::str::from_utf8(&csv).expect("csv is utf-8"))?;

    let full = relex::eval::EvalReport {
        records,
        errors: report.errors.clone(),
    };
    let table = full.summary_table();
    write_text(&config.output_dir.join("summary.txt"), &table)?;
    echo_run(config, seed, "benchmark")?;
    print!("{}", table);
    println!("wrote {}", report_path.display());

    if report.errors.is_empty() {
        Ok(Outcome::Clean)
    } else {
        Ok(Outcome::Partial)
    }
}

fn cmd_export_dot(input: &Path, out: Option<&Path>) -> Result<Outcome, Error> {
    let expl = explanation_from_json(&fs::read_to_string(input)?)?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| input.with_extension("dot"));
    write_text(&out, &explanation_to_dot(&expl))?;
    println!("wrote {}", out.display());
    Ok(Outcome::Clean)
}
