//! Explanation quality metrics and the benchmark harness.
//!
//! Explanations are scored two ways: AUC-ROC of the edge scores against
//! the ground-truth motif edges (how well the explainer ranks the right
//! reason), and infidelity (how well the scores predict the black box's
//! actual reaction to removing edges). The harness runs every
//! configured explainer over sampled motif nodes and reduces the
//! records into per-method tables.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::time::Instant;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{relational_anchors, saliency_explain, uniform_random_explanation, AnchorOptions};
use crate::blackbox::BlackBoxModel;
use crate::error::{Error, Result};
use crate::explain::{
    enumerate_perturbations, explain_node, sample_perturbation, Binarization, Explanation,
    MaskKind, RelexOptions,
};
use crate::graph::{extract_ego, EdgeScores, EgoGraph};
use crate::rng::{stream_rng, task_rng, TaskPurpose};
use crate::synth::{right_reason, LabeledGraph};

// ---------------------------------------------------------------------
// AUC-ROC
// ---------------------------------------------------------------------

/// AUC against ground truth, or the explicit marker for the degenerate
/// cases (no positive or no negative edges) that aggregates must skip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AucResult {
    Value(f64),
    Undefined,
}

impl AucResult {
    pub fn value(&self) -> Option<f64> {
        match *self {
            AucResult::Value(v) => Some(v),
            AucResult::Undefined => None,
        }
    }
}

/// Rank-based AUC-ROC of edge scores against the right-reason edge set:
/// the probability that a uniformly random right-reason edge scores
/// strictly above a uniformly random other ego edge, ties counted half.
///
/// `right` is given in ego-local canonical pairs and must be a subset of
/// the ego's edges.
pub fn auc_roc(
    scores: &EdgeScores,
    right: &BTreeSet<(usize, usize)>,
    ego: &EgoGraph,
) -> Result<AucResult> {
    let edges = ego.edges();
    let edge_set: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    for e in right {
        if !edge_set.contains(e) {
            return Err(Error::InvalidConfig(format!(
                "right-reason edge ({}, {}) is not an ego edge",
                e.0, e.1
            )));
        }
    }
    let per = scores.per_edge(ego);
    let labels: Vec<bool> = edges.iter().map(|e| right.contains(e)).collect();
    let npos = labels.iter().filter(|&&l| l).count();
    let nneg = labels.len() - npos;
    if npos == 0 || nneg == 0 {
        return Ok(AucResult::Undefined);
    }

    // Midranks: tied scores share the average of their rank range.
    let mut idx: Vec<usize> = (0..per.len()).collect();
    idx.sort_by(|&i, &j| per[i].partial_cmp(&per[j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; per.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && per[idx[j + 1]] == per[idx[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let auc = (rank_sum - (npos * (npos + 1)) as f64 / 2.0) / (npos * nneg) as f64;
    Ok(AucResult::Value(auc))
}

/// Independent AUC reference: sweep a threshold over the unique scores
/// and integrate the ROC polyline with the trapezoid rule. Exists so the
/// rank-based implementation has something to disagree with.
pub fn auc_threshold_sweep(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let npos = labels.iter().filter(|&&l| l).count();
    let nneg = labels.len() - npos;
    if npos == 0 || nneg == 0 {
        return None;
    }
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    thresholds.dedup();

    let mut area = 0.0;
    let (mut prev_fpr, mut prev_tpr) = (0.0, 0.0);
    for t in thresholds {
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| l && s >= t)
            .count();
        let fp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| !l && s >= t)
            .count();
        let tpr = tp as f64 / npos as f64;
        let fpr = fp as f64 / nneg as f64;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
    Some(area)
}

// ---------------------------------------------------------------------
// Infidelity
// ---------------------------------------------------------------------

/// Perturbation draws and cached black-box responses, shared so every
/// method on a node is scored against identical removals.
#[derive(Debug, Clone)]
pub struct InfidelityDraws {
    /// Kept sub-adjacencies from the BFS sampler.
    kept: Vec<Array2<f64>>,
    /// Black-box probability of the original class on each kept draw.
    f_kept: Vec<f64>,
    /// Black-box probability of the original class on the full ego.
    f_full: f64,
}

impl InfidelityDraws {
    pub fn num_draws(&self) -> usize {
        self.kept.len()
    }

    /// Builds draws directly from given kept matrices (useful for
    /// forcing an exact outcome set on tiny egos).
    pub fn from_kept(
        blackbox: &dyn BlackBoxModel,
        ego: &EgoGraph,
        kept: Vec<Array2<f64>>,
    ) -> Result<Self> {
        let original = blackbox.predict(ego.adjacency(), ego.features(), ego.center())?;
        let class = original.argmax();
        let f_kept = kept
            .iter()
            .map(|k| Ok(blackbox.predict(k, ego.features(), ego.center())?.prob(class)))
            .collect::<Result<_>>()?;
        Ok(InfidelityDraws {
            kept,
            f_kept,
            f_full: original.prob(class),
        })
    }
}

/// Samples `n` BFS perturbations and queries the black box on each,
/// ready for [`infidelity_with_draws`].
pub fn prepare_infidelity_draws(
    blackbox: &dyn BlackBoxModel,
    ego: &EgoGraph,
    n: usize,
    keep_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<InfidelityDraws> {
    if n == 0 {
        return Err(Error::InvalidConfig("infidelity needs n >= 1 draws".into()));
    }
    let kept = (0..n)
        .map(|_| sample_perturbation(ego, keep_prob, rng))
        .collect::<Result<Vec<_>>>()?;
    InfidelityDraws::from_kept(blackbox, ego, kept)
}

/// Infidelity of edge scores on prepared draws: the mean over draws of
/// (sum over removed edges of A ⊙ scores − actual drop in the original
/// class's probability)². No normalization is applied, so the result
/// scales with the scores — that is the formula's documented behavior.
pub fn infidelity_with_draws(
    ego: &EgoGraph,
    scores: &EdgeScores,
    draws: &InfidelityDraws,
) -> f64 {
    let a = ego.adjacency();
    let phi = scores.values();
    let n = ego.num_nodes();
    let mut total = 0.0;
    for (kept, &f_kept) in draws.kept.iter().zip(&draws.f_kept) {
        // I = A - Â: the removed edges; sum Φ over its upper triangle.
        let mut removed_mass = 0.0;
        for u in 0..n {
            for v in (u + 1)..n {
                removed_mass += (a[[u, v]] - kept[[u, v]]) * phi[[u, v]];
            }
        }
        let term = removed_mass - (draws.f_full - f_kept);
        total += term * term;
    }
    total / draws.kept.len() as f64
}

/// Monte-Carlo infidelity with fresh draws.
pub fn infidelity(
    blackbox: &dyn BlackBoxModel,
    ego: &EgoGraph,
    scores: &EdgeScores,
    n: usize,
    keep_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let draws = prepare_infidelity_draws(blackbox, ego, n, keep_prob, rng)?;
    Ok(infidelity_with_draws(ego, scores, &draws))
}

/// Exact infidelity by enumerating the whole perturbation distribution.
/// Only feasible on small egos (see [`enumerate_perturbations`]).
pub fn infidelity_exact(
    blackbox: &dyn BlackBoxModel,
    ego: &EgoGraph,
    scores: &EdgeScores,
    keep_prob: f64,
) -> Result<f64> {
    let outcomes = enumerate_perturbations(ego, keep_prob)?;
    let original = blackbox.predict(ego.adjacency(), ego.features(), ego.center())?;
    let class = original.argmax();
    let f_full = original.prob(class);
    let a = ego.adjacency();
    let phi = scores.values();
    let n = ego.num_nodes();
    let mut total = 0.0;
    for (kept, prob) in outcomes {
        let f_kept = blackbox.predict(&kept, ego.features(), ego.center())?.prob(class);
        let mut removed_mass = 0.0;
        for u in 0..n {
            for v in (u + 1)..n {
                removed_mass += (a[[u, v]] - kept[[u, v]]) * phi[[u, v]];
            }
        }
        let term = removed_mass - (f_full - f_kept);
        total += prob * term * term;
    }
    Ok(total)
}

// ---------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------

/// The explainers the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    RelexGumbel,
    RelexSigmoid,
    Anchors,
    Saliency,
    Random,
}

impl MethodKind {
    pub fn name(&self) -> &'static str {
        match self {
            MethodKind::RelexGumbel => "relex-gumbel",
            MethodKind::RelexSigmoid => "relex-sigmoid",
            MethodKind::Anchors => "anchors",
            MethodKind::Saliency => "saliency",
            MethodKind::Random => "random",
        }
    }

    pub fn all() -> Vec<MethodKind> {
        vec![
            MethodKind::RelexGumbel,
            MethodKind::RelexSigmoid,
            MethodKind::Anchors,
            MethodKind::Saliency,
            MethodKind::Random,
        ]
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relex-gumbel" => Ok(MethodKind::RelexGumbel),
            "relex-sigmoid" => Ok(MethodKind::RelexSigmoid),
            "anchors" => Ok(MethodKind::Anchors),
            "saliency" => Ok(MethodKind::Saliency),
            "random" => Ok(MethodKind::Random),
            other => Err(Error::InvalidConfig(format!(
                "unknown method '{}'; expected one of relex-gumbel, relex-sigmoid, anchors, saliency, random",
                other
            ))),
        }
    }
}

/// Everything one benchmark run needs besides the data and the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSettings {
    pub methods: Vec<MethodKind>,
    /// Ego radius for every explanation (overrides `relex.hops`).
    pub hops: usize,
    /// Motif nodes are sampled down to this many.
    pub node_cap: usize,
    /// Perturbation draws per node for the infidelity estimate.
    pub infidelity_samples: usize,
    pub relex: RelexOptions,
    pub anchors: AnchorOptions,
    pub seed: u64,
}

impl BenchmarkSettings {
    pub fn new(seed: u64) -> Self {
        BenchmarkSettings {
            methods: MethodKind::all(),
            hops: 3,
            node_cap: 100,
            infidelity_samples: 100,
            relex: RelexOptions::new(crate::explain::MaskSpec::gumbel()),
            anchors: AnchorOptions::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods configured".into()));
        }
        if self.node_cap == 0 {
            return Err(Error::InvalidConfig("node_cap must be >= 1".into()));
        }
        if self.infidelity_samples == 0 {
            return Err(Error::InvalidConfig("infidelity_samples must be >= 1".into()));
        }
        self.relex.validate()?;
        self.anchors.validate()
    }
}

/// One scored (node, method) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub node: usize,
    pub class: usize,
    pub method: String,
    /// None when AUC is undefined for this node (e.g. every ego edge is
    /// part of the right reason).
    pub auc: Option<f64>,
    pub infidelity: f64,
    /// Surrogate fidelity, for the methods that have one.
    pub fidelity: Option<f64>,
    /// Black-box calls spent producing the explanation.
    pub calls: u64,
    /// Wall-clock seconds for the explanation; None when read back from
    /// a CSV written without timings.
    pub seconds: Option<f64>,
}

/// A (node, method) pair that failed; the run carries on.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeError {
    pub node: usize,
    pub method: String,
    pub message: String,
}

/// Per-method aggregate over a report's records.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub nodes: usize,
    pub mean_auc: Option<f64>,
    pub std_auc: Option<f64>,
    /// Nodes whose AUC was undefined and therefore excluded.
    pub undefined_auc: usize,
    pub mean_infidelity: f64,
    pub std_infidelity: f64,
    pub mean_calls: f64,
}

/// Benchmark output: per-node records (sorted by node id, methods in
/// configured order) plus the failures encountered along the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub records: Vec<NodeRecord>,
    pub errors: Vec<NodeError>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

impl EvalReport {
    /// Aggregates grouped by method, ordered by first appearance.
    pub fn summaries(&self) -> Vec<MethodSummary> {
        let mut order: Vec<&str> = Vec::new();
        for r in &self.records {
            if !order.contains(&r.method.as_str()) {
                order.push(&r.method);
            }
        }
        order
            .into_iter()
            .map(|method| {
                let rows: Vec<&NodeRecord> =
                    self.records.iter().filter(|r| r.method == method).collect();
                let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
                let (mean_auc, std_auc) = mean_std(&aucs);
                let infids: Vec<f64> = rows.iter().map(|r| r.infidelity).collect();
                let (mean_infidelity, std_infidelity) = mean_std(&infids);
                let mean_calls =
                    rows.iter().map(|r| r.calls as f64).sum::<f64>() / rows.len().max(1) as f64;
                MethodSummary {
                    method: method.to_string(),
                    nodes: rows.len(),
                    mean_auc: if aucs.is_empty() { None } else { Some(mean_auc) },
                    std_auc: if aucs.is_empty() { None } else { Some(std_auc) },
                    undefined_auc: rows.len() - aucs.len(),
                    mean_infidelity,
                    std_infidelity,
                    mean_calls,
                }
            })
            .collect()
    }

    /// Aligned text table of the summaries.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:>6} {:>16} {:>7} {:>20} {:>10}\n",
            "method", "nodes", "auc (mean±std)", "undef", "infidelity (m±s)", "calls"
        ));
        for s in self.summaries() {
            let auc = match (s.mean_auc, s.std_auc) {
                (Some(m), Some(sd)) => format!("{:.4}±{:.4}", m, sd),
                _ => "n/a".to_string(),
            };
            out.push_str(&format!(
                "{:<14} {:>6} {:>16} {:>7} {:>20} {:>10.1}\n",
                s.method,
                s.nodes,
                auc,
                s.undefined_auc,
                format!("{:.4}±{:.4}", s.mean_infidelity, s.std_infidelity),
                s.mean_calls
            ));
        }
        if !self.errors.is_empty() {
            out.push_str(&format!("errors: {}\n", self.errors.len()));
            for e in &self.errors {
                out.push_str(&format!("  node {} {}: {}\n", e.node, e.method, e.message));
            }
        }
        out
    }
}

/// ChaCha stream for the benchmark's node subsampling (distinct from
/// per-task and generator streams).
const SELECTION_STREAM: u64 = 1 << 62;

/// Motif nodes eligible for evaluation, capped by uniform subsampling.
pub fn select_nodes(labeled: &LabeledGraph, cap: usize, seed: u64) -> Vec<usize> {
    let eligible: Vec<usize> = (0..labeled.graph.num_nodes())
        .filter(|&v| labeled.class_of[v] != 0)
        .collect();
    if eligible.len() <= cap {
        return eligible;
    }
    let mut rng = stream_rng(seed, SELECTION_STREAM);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, eligible.len(), cap)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn run_method(
    method: MethodKind,
    blackbox: &dyn BlackBoxModel,
    labeled: &LabeledGraph,
    node: usize,
    right_k: usize,
    settings: &BenchmarkSettings,
) -> Result<Explanation> {
    match method {
        MethodKind::RelexGumbel | MethodKind::RelexSigmoid => {
            let mut opts = settings.relex.clone();
            opts.hops = settings.hops;
            opts.seed = settings.seed;
            opts.mask.kind = if method == MethodKind::RelexGumbel {
                MaskKind::Gumbel
            } else {
                MaskKind::Sigmoid
            };
            // Ground truth is available here, so binarize by size.
            opts.mask.binarization = Binarization::TopK(right_k);
            explain_node(blackbox, &labeled.graph, node, &opts)
        }
        MethodKind::Anchors => {
            let ego = extract_ego(&labeled.graph, node, settings.hops)?;
            let mut rng = task_rng(settings.seed, node, TaskPurpose::Anchors);
            let mut expl = relational_anchors(blackbox, &ego, &settings.anchors, &mut rng)?;
            expl.seed = settings.seed;
            Ok(expl)
        }
        MethodKind::Saliency => {
            let ego = extract_ego(&labeled.graph, node, settings.hops)?;
            let mut expl = saliency_explain(blackbox, &ego)?;
            expl.seed = settings.seed;
            Ok(expl)
        }
        MethodKind::Random => {
            let ego = extract_ego(&labeled.graph, node, settings.hops)?;
            let mut rng = task_rng(settings.seed, node, TaskPurpose::RandomBaseline);
            let mut expl = uniform_random_explanation(&ego, &mut rng);
            expl.seed = settings.seed;
            Ok(expl)
        }
    }
}

/// Runs every configured method over the sampled motif nodes and scores
/// each explanation with AUC (against the node's right reason) and
/// infidelity (on draws shared across methods). Nodes in `exclude` are
/// skipped, which is how resumed runs stay idempotent. Failures are
/// recorded and the run continues.
pub fn run_benchmark(
    labeled: &LabeledGraph,
    blackbox: &dyn BlackBoxModel,
    settings: &BenchmarkSettings,
    exclude: &BTreeSet<usize>,
) -> Result<EvalReport> {
    settings.validate()?;
    let nodes: Vec<usize> = select_nodes(labeled, settings.node_cap, settings.seed)
        .into_iter()
        .filter(|n| !exclude.contains(n))
        .collect();

    let per_node: Vec<(Vec<NodeRecord>, Vec<NodeError>)> = nodes
        .par_iter()
        .map(|&node| evaluate_node(labeled, blackbox, settings, node))
        .collect();

    let mut report = EvalReport::default();
    for (records, errors) in per_node {
        report.records.extend(records);
        report.errors.extend(errors);
    }
    Ok(report)
}

/// Per-node context shared by every method: the ego, the right reason
/// in local indices, and the common infidelity draws.
struct NodeContext {
    ego: EgoGraph,
    right_local: BTreeSet<(usize, usize)>,
    draws: InfidelityDraws,
}

fn node_context(
    labeled: &LabeledGraph,
    blackbox: &dyn BlackBoxModel,
    settings: &BenchmarkSettings,
    node: usize,
) -> Result<NodeContext> {
    let ego = extract_ego(&labeled.graph, node, settings.hops)?;
    let right_global = right_reason(labeled, node, settings.hops)?;
    let right_local: BTreeSet<(usize, usize)> = right_global
        .iter()
        .map(|&(u, v)| {
            let lu = ego.local_index(u).expect("right reason inside ego");
            let lv = ego.local_index(v).expect("right reason inside ego");
            (lu.min(lv), lu.max(lv))
        })
        .collect();
    let mut rng = task_rng(settings.seed, node, TaskPurpose::Infidelity);
    let draws = prepare_infidelity_draws(
        blackbox,
        &ego,
        settings.infidelity_samples,
        settings.relex.keep_prob,
        &mut rng,
    )?;
    Ok(NodeContext {
        ego,
        right_local,
        draws,
    })
}

/// All methods on one node. Never fails as a whole: per-method errors
/// (and setup errors) become [`NodeError`]s.
fn evaluate_node(
    labeled: &LabeledGraph,
    blackbox: &dyn BlackBoxModel,
    settings: &BenchmarkSettings,
    node: usize,
) -> (Vec<NodeRecord>, Vec<NodeError>) {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let NodeContext {
        ego,
        right_local,
        draws,
    } = match node_context(labeled, blackbox, settings, node) {
        Ok(ctx) => ctx,
        Err(e) => {
            errors.push(NodeError {
                node,
                method: "setup".into(),
                message: e.to_string(),
            });
            return (records, errors);
        }
    };

    for &method in &settings.methods {
        let start = Instant::now();
        let outcome = run_method(method, blackbox, labeled, node, right_local.len(), settings)
            .and_then(|expl| {
                let scores = expl.to_edge_scores(&ego)?;
                let auc = auc_roc(&scores, &right_local, &ego)?;
                let infid = infidelity_with_draws(&ego, &scores, &draws);
                Ok((expl, auc, infid))
            });
        match outcome {
            Ok((expl, auc, infid)) => records.push(NodeRecord {
                node,
                class: labeled.class_of[node],
                method: expl.method.clone(),
                auc: auc.value(),
                infidelity: infid,
                fidelity: expl.surrogate_fidelity,
                calls: expl.calls,
                seconds: Some(start.elapsed().as_secs_f64()),
            }),
            Err(e) => errors.push(NodeError {
                node,
                method: method.name().into(),
                message: e.to_string(),
            }),
        }
    }
    (records, errors)
}

// ---------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------

pub const CSV_HEADER: &str = "node,class,method,auc,infidelity,fidelity,calls,seconds";

/// Writes records as CSV. Timings are omitted unless asked for, keeping
/// repeated runs byte-identical.
pub fn write_csv<W: Write>(
    records: &[NodeRecord],
    include_timings: bool,
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "{}", CSV_HEADER)?;
    for r in records {
        let auc = r.auc.map(|v| v.to_string()).unwrap_or_default();
        let fidelity = r.fidelity.map(|v| v.to_string()).unwrap_or_default();
        let seconds = if include_timings {
            r.seconds.map(|v| v.to_string()).unwrap_or_default()
        } else {
            String::new()
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.node, r.class, r.method, auc, r.infidelity, fidelity, r.calls, seconds
        )?;
    }
    Ok(())
}

/// Reads records back from CSV produced by [`write_csv`].
pub fn read_csv<R: BufRead>(reader: R) -> Result<Vec<NodeRecord>> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))?
        .map_err(Error::Io)?;
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse(format!(
            "unexpected CSV header '{}'",
            header.trim()
        )));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse(format!(
                "line {}: expected 8 fields, found {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {}: bad {} '{}'", lineno + 2, what, s)))
        };
        let opt_f64 = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(s, what).map(Some)
            }
        };
        records.push(NodeRecord {
            node: fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad node id", lineno + 2)))?,
            class: fields[1]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad class", lineno + 2)))?,
            method: fields[2].to_string(),
            auc: opt_f64(fields[3], "auc")?,
            infidelity: parse_f64(fields[4], "infidelity")?,
            fidelity: opt_f64(fields[5], "fidelity")?,
            calls: fields[6]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad call count", lineno + 2)))?,
            seconds: opt_f64(fields[7], "seconds")?,
        });
    }
    Ok(records)
}
