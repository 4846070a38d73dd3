//! On-disk formats: graph documents (JSON and TSV with sidecars),
//! right-reason maps, trained models, explanations, and DOT export.
//!
//! Everything here converts between strings and in-memory types; file
//! I/O lives with the callers. Parsers validate aggressively — they are
//! the untrusted-input boundary of the whole crate.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::blackbox::{BlackBoxModel, GcnHyper, GcnModel, RuleModel};
use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::graph::Graph;
use crate::synth::LabeledGraph;

/// Parsers refuse graph documents above this many nodes. The whole
/// pipeline is desk-scale (dense per-ego matrices); a document claiming
/// millions of nodes is either a mistake or hostile input.
pub const MAX_DOCUMENT_NODES: usize = 100_000;

/// Default cap for the one-hot degree features synthesized when a
/// document carries no feature matrix.
pub const DEFAULT_DEGREE_CAP: usize = 10;

// ---------------------------------------------------------------------
// Graph JSON
// ---------------------------------------------------------------------

/// The graph interchange document. Optional sections are omitted when
/// absent; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motifs: Option<Vec<usize>>,
}

impl GraphDocument {
    pub fn from_graph(graph: &Graph) -> Self {
        GraphDocument {
            num_nodes: graph.num_nodes(),
            edges: graph.edges().to_vec(),
            features: Some(
                graph
                    .features()
                    .rows()
                    .into_iter()
                    .map(|r| r.to_vec())
                    .collect(),
            ),
            labels: graph.labels().map(<[usize]>::to_vec),
            motifs: graph.motif_of().map(<[usize]>::to_vec),
        }
    }

    /// Validates and builds the graph. Documents without features get
    /// one-hot degree features capped at `degree_cap`.
    pub fn into_graph(self, degree_cap: usize) -> Result<Graph> {
        if self.num_nodes > MAX_DOCUMENT_NODES {
            return Err(Error::Parse(format!(
                "document claims {} nodes; the cap is {}",
                self.num_nodes, MAX_DOCUMENT_NODES
            )));
        }
        let features = match self.features {
            Some(rows) => Some(rows_to_matrix(&rows, "features")?),
            None => Some(degree_features(self.num_nodes, &self.edges, degree_cap)?),
        };
        Graph::build(self.num_nodes, &self.edges, features, self.labels, self.motifs)
    }
}

/// Rectangular Vec-of-rows to a dense matrix, rejecting ragged rows and
/// non-finite entries.
fn rows_to_matrix(rows: &[Vec<f64>], context: &str) -> Result<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut flat = Vec::with_capacity(rows.len() * ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::RaggedFeatures {
                row: i,
                got: row.len(),
                expected: ncols,
            });
        }
        for &v in row {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{} row {}", context, i)));
            }
            flat.push(v);
        }
    }
    Array2::from_shape_vec((rows.len(), ncols), flat)
        .map_err(|e| Error::Parse(format!("{}: {}", context, e)))
}

/// One-hot encoding of each node's degree, clamped to `cap` (so the
/// matrix has cap + 1 columns). The fallback featureization for graph
/// files that carry topology only.
pub fn degree_features(
    num_nodes: usize,
    edges: &[(usize, usize)],
    cap: usize,
) -> Result<Array2<f64>> {
    let mut degree = vec![0usize; num_nodes];
    let mut seen = std::collections::BTreeSet::new();
    for &(u, v) in edges {
        if u >= num_nodes {
            return Err(Error::NodeOutOfRange { id: u, num_nodes });
        }
        if v >= num_nodes {
            return Err(Error::NodeOutOfRange { id: v, num_nodes });
        }
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        if seen.insert((u.min(v), u.max(v))) {
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    let mut x = Array2::zeros((num_nodes, cap + 1));
    for (v, &d) in degree.iter().enumerate() {
        x[[v, d.min(cap)]] = 1.0;
    }
    Ok(x)
}

pub fn load_graph_json(text: &str, degree_cap: usize) -> Result<Graph> {
    let doc: GraphDocument = serde_json::from_str(text)?;
    doc.into_graph(degree_cap)
}

pub fn save_graph_json(graph: &Graph) -> Result<String> {
    Ok(serde_json::to_string_pretty(&GraphDocument::from_graph(graph))?)
}

// ---------------------------------------------------------------------
// TSV edge list with CSV sidecars
// ---------------------------------------------------------------------

/// Parses a tab-separated edge list: one `u<TAB>v` pair per line, blank
/// lines and `#` comments ignored.
pub fn load_edge_tsv(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let (u, v) = match (parts.next(), parts.next(), parts.next()) {
            (Some(u), Some(v), None) => (u.trim(), v.trim()),
            _ => {
                return Err(Error::Parse(format!(
                    "line {}: expected 'u<TAB>v'",
                    lineno + 1
                )))
            }
        };
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Parse(format!("line {}: bad node id '{}'", lineno + 1, s)))
        };
        edges.push((parse(u)?, parse(v)?));
    }
    Ok(edges)
}

/// Parses a feature sidecar: one comma-separated row of reals per line.
pub fn load_features_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad real '{}'", lineno + 1, s)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Parses a label sidecar: one class id per line.
pub fn load_labels_csv(text: &str) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        labels.push(line.parse().map_err(|_| {
            Error::Parse(format!("line {}: bad class id '{}'", lineno + 1, line))
        })?);
    }
    Ok(labels)
}

/// Assembles a graph from a TSV edge list and optional sidecars. The
/// node count is the sidecar length when one is given (and must cover
/// every endpoint), otherwise the largest endpoint + 1.
pub fn graph_from_tsv(
    edges_text: &str,
    features_csv: Option<&str>,
    labels_csv: Option<&str>,
    degree_cap: usize,
) -> Result<Graph> {
    let edges = load_edge_tsv(edges_text)?;
    let features = features_csv.map(load_features_csv).transpose()?;
    let labels = labels_csv.map(load_labels_csv).transpose()?;
    let min_nodes = edges
        .iter()
        .map(|&(u, v)| u.max(v) + 1)
        .max()
        .unwrap_or(0);
    let num_nodes = match (&features, &labels) {
        (Some(f), Some(l)) if f.len() != l.len() => {
            return Err(Error::Parse(format!(
                "feature sidecar has {} rows but label sidecar has {}",
                f.len(),
                l.len()
            )));
        }
        (Some(f), _) => f.len(),
        (None, Some(l)) => l.len(),
        (None, None) => min_nodes,
    };
    if num_nodes < min_nodes {
        return Err(Error::Parse(format!(
            "sidecars describe {} nodes but the edge list references node {}",
            num_nodes,
            min_nodes - 1
        )));
    }
    GraphDocument {
        num_nodes,
        edges,
        features,
        labels,
        motifs: None,
    }
    .into_graph(degree_cap)
}

// ---------------------------------------------------------------------
// Right reasons
// ---------------------------------------------------------------------

/// Ground-truth map written next to generated datasets: motif node id →
/// the full edge set of its motif (global canonical pairs). Tree nodes
/// (class 0) have no motif of their own and are omitted.
pub fn right_reasons_document(
    labeled: &LabeledGraph,
) -> BTreeMap<usize, Vec<(usize, usize)>> {
    let mut map = BTreeMap::new();
    for v in 0..labeled.graph.num_nodes() {
        if labeled.class_of[v] == 0 {
            continue;
        }
        if let Some(edges) = labeled.motif_edges.get(&labeled.motif_of[v]) {
            map.insert(v, edges.iter().copied().collect());
        }
    }
    map
}

pub fn right_reasons_to_json(map: &BTreeMap<usize, Vec<(usize, usize)>>) -> Result<String> {
    Ok(serde_json::to_string_pretty(map)?)
}

pub fn right_reasons_from_json(text: &str) -> Result<BTreeMap<usize, Vec<(usize, usize)>>> {
    Ok(serde_json::from_str(text)?)
}

// ---------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------

/// A trained black box of either family, ready to be queried.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Gcn(GcnModel),
    Rules(RuleModel),
}

impl AnyModel {
    pub fn blackbox(&self) -> &dyn BlackBoxModel {
        match self {
            AnyModel::Gcn(m) => m,
            AnyModel::Rules(m) => m,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            AnyModel::Gcn(_) => "gcn",
            AnyModel::Rules(_) => "rules",
        }
    }
}

/// Serialized model, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelDocument {
    Gcn {
        /// Row-major convolution weight matrices, input layer first.
        layers: Vec<Vec<Vec<f64>>>,
        /// One bias row per convolution; absent means all zero.
        #[serde(default)]
        biases: Vec<Vec<f64>>,
        /// Readout over the concatenated convolution outputs.
        readout: Vec<Vec<f64>>,
        #[serde(default)]
        readout_bias: Vec<f64>,
        hyper: GcnHyper,
    },
    Rules {
        rule_weights: Vec<f64>,
        /// Observed (node id, class id) pairs, sorted by node id.
        seeds: Vec<(usize, usize)>,
        num_classes: usize,
        smoothing: f64,
    },
}

pub fn gcn_to_document(model: &GcnModel, hyper: &GcnHyper) -> ModelDocument {
    ModelDocument::Gcn {
        layers: model
            .convs()
            .iter()
            .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect(),
        biases: model.conv_biases().iter().map(|b| b.row(0).to_vec()).collect(),
        readout: model
            .readout()
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        readout_bias: model.readout_bias().row(0).to_vec(),
        hyper: hyper.clone(),
    }
}

pub fn rules_to_document(model: &RuleModel) -> ModelDocument {
    ModelDocument::Rules {
        rule_weights: model.rule_weights.clone(),
        seeds: model.seeds.iter().map(|(&v, &c)| (v, c)).collect(),
        num_classes: model.num_classes,
        smoothing: model.smoothing,
    }
}

pub fn document_to_model(doc: ModelDocument) -> Result<AnyModel> {
    match doc {
        ModelDocument::Gcn {
            layers,
            biases,
            readout,
            readout_bias,
            hyper: _,
        } => {
            let convs = layers
                .iter()
                .map(|w| rows_to_matrix(w, "gcn layer"))
                .collect::<Result<Vec<_>>>()?;
            let conv_biases = if biases.is_empty() {
                convs.iter().map(|w| Array2::zeros((1, w.ncols()))).collect()
            } else {
                biases
                    .iter()
                    .map(|b| rows_to_matrix(std::slice::from_ref(b), "gcn bias"))
                    .collect::<Result<Vec<_>>>()?
            };
            let readout = rows_to_matrix(&readout, "gcn readout")?;
            let readout_bias = if readout_bias.is_empty() {
                Array2::zeros((1, readout.ncols()))
            } else {
                rows_to_matrix(std::slice::from_ref(&readout_bias), "gcn readout bias")?
            };
            Ok(AnyModel::Gcn(GcnModel::from_parts(
                convs,
                conv_biases,
                readout,
                readout_bias,
            )?))
        }
        ModelDocument::Rules {
            rule_weights,
            seeds,
            num_classes,
            smoothing,
        } => {
            if rule_weights.is_empty() || rule_weights.len() > 16 {
                return Err(Error::Parse(
                    "rule model needs between 1 and 16 hop weights".into(),
                ));
            }
            if rule_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Parse("rule weights must be finite and >= 0".into()));
            }
            if num_classes == 0 || num_classes > 1024 {
                return Err(Error::Parse(
                    "rule model needs between 1 and 1024 classes".into(),
                ));
            }
            if !smoothing.is_finite() || smoothing <= 0.0 {
                return Err(Error::Parse("smoothing must be finite and positive".into()));
            }
            if let Some(&(node, class)) = seeds.iter().find(|&&(_, c)| c >= num_classes) {
                return Err(Error::Parse(format!(
                    "seed node {} has class {} outside 0..{}",
                    node, class, num_classes
                )));
            }
            let mut seed_map = BTreeMap::new();
            for (node, class) in seeds {
                if seed_map.insert(node, class).is_some() {
                    return Err(Error::Parse(format!("duplicate seed node {}", node)));
                }
            }
            Ok(AnyModel::Rules(RuleModel {
                rule_weights,
                seeds: seed_map,
                num_classes,
                smoothing,
            }))
        }
    }
}

pub fn model_to_json(doc: &ModelDocument) -> Result<String> {
    Ok(serde_json::to_string_pretty(doc)?)
}

pub fn model_from_json(text: &str) -> Result<AnyModel> {
    document_to_model(serde_json::from_str(text)?)
}

// ---------------------------------------------------------------------
// Explanations
// ---------------------------------------------------------------------

pub fn explanation_to_json(expl: &Explanation) -> Result<String> {
    Ok(serde_json::to_string_pretty(expl)?)
}

pub fn explanation_from_json(text: &str) -> Result<Explanation> {
    let expl: Explanation = serde_json::from_str(text)?;
    for e in &expl.edges {
        if e.u == e.v {
            return Err(Error::SelfLoop(e.u));
        }
        if !e.score.is_finite() || e.score < 0.0 || e.score > 1.0 {
            return Err(Error::Parse(format!(
                "edge ({}, {}) has score {} outside [0, 1]",
                e.u, e.v, e.score
            )));
        }
    }
    Ok(expl)
}

// ---------------------------------------------------------------------
// DOT export
// ---------------------------------------------------------------------

/// Gray level for a score: 1.0 is black, 0.0 is a light (but still
/// visible) gray, darkness growing with importance.
fn score_color(score: f64) -> String {
    let level = (230.0 * (1.0 - score.clamp(0.0, 1.0))).round() as u8;
    format!("#{:02x}{:02x}{:02x}", level, level, level)
}

/// Renders an explanation as an undirected Graphviz graph: edge
/// darkness and width grow with the score, selected edges are bold, and
/// the center node is filled.
pub fn explanation_to_dot(expl: &Explanation) -> String {
    let mut out = String::new();
    out.push_str("graph explanation {\n");
    out.push_str(&format!(
        "  label=\"{}: node {} ({} hops)\";\n",
        expl.method, expl.node, expl.hops
    ));
    out.push_str("  node [shape=circle, fontsize=10];\n");
    out.push_str(&format!(
        "  {} [style=filled, fillcolor=\"#ffd27f\", penwidth=2];\n",
        expl.node
    ));
    let mut edges: Vec<_> = expl
        .edges
        .iter()
        .map(|e| (e.u.min(e.v), e.u.max(e.v), e.score, e.selected))
        .collect();
    edges.sort_by_key(|e| (e.0, e.1));
    for (u, v, score, selected) in edges {
        let style = if selected { ", style=bold" } else { "" };
        out.push_str(&format!(
            "  {} -- {} [color=\"{}\", penwidth={:.2}{}];\n",
            u,
            v,
            score_color(score),
            0.75 + 2.25 * score.clamp(0.0, 1.0),
            style
        ));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blackbox::{train_gcn, ClassDistribution};
    use crate::explain::{explain_node, MaskSpec, RelexOptions};
    use crate::graph::extract_ego;
    use crate::synth::{gen_tree_ba, SynthConfig};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn sample_graph() -> Graph {
        let features = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.0, 0.0]];
        Graph::build(
            4,
            &[(0, 1), (1, 2), (2, 3)],
            Some(features),
            Some(vec![0, 1, 1, 0]),
            Some(vec![0, 0, 1, 1]),
        )
        .unwrap()
    }

    #[test]
    fn graph_json_round_trip() {
        let graph = sample_graph();
        let text = save_graph_json(&graph).unwrap();
        let back = load_graph_json(&text, DEFAULT_DEGREE_CAP).unwrap();
        assert_eq!(back.num_nodes(), graph.num_nodes());
        assert_eq!(back.edges(), graph.edges());
        assert_eq!(back.labels(), graph.labels());
        assert_eq!(back.motif_of(), graph.motif_of());
        assert_eq!(back.features(), graph.features());
    }

    #[test]
    fn missing_features_default_to_degree_one_hot() {
        let text = r#"{"num_nodes": 3, "edges": [[0, 1], [1, 2]]}"#;
        let graph = load_graph_json(text, 10).unwrap();
        // Degrees 1, 2, 1 -> one-hot columns 1, 2, 1 of an 11-wide matrix.
        assert_eq!(graph.feature_dim(), 11);
        assert_eq!(graph.features()[[0, 1]], 1.0);
        assert_eq!(graph.features()[[1, 2]], 1.0);
        assert_eq!(graph.features()[[2, 1]], 1.0);
        assert_abs_diff_eq!(graph.features().sum(), 3.0);

        // A cap of 1 clamps the middle node's degree.
        let capped = load_graph_json(text, 1).unwrap();
        assert_eq!(capped.feature_dim(), 2);
        assert_eq!(capped.features()[[1, 1]], 1.0);
    }

    #[test]
    fn graph_json_rejects_bad_documents() {
        // Unknown key.
        assert!(load_graph_json(r#"{"num_nodes": 1, "edges": [], "extra": 1}"#, 10).is_err());
        // Self-loop.
        assert!(load_graph_json(r#"{"num_nodes": 2, "edges": [[1, 1]]}"#, 10).is_err());
        // Out-of-range endpoint.
        assert!(load_graph_json(r#"{"num_nodes": 2, "edges": [[0, 5]]}"#, 10).is_err());
        // Ragged features.
        assert!(load_graph_json(
            r#"{"num_nodes": 2, "edges": [[0, 1]], "features": [[1.0], [1.0, 2.0]]}"#,
            10
        )
        .is_err());
        // Node count over the parse cap.
        let huge = format!(r#"{{"num_nodes": {}, "edges": []}}"#, MAX_DOCUMENT_NODES + 1);
        assert!(load_graph_json(&huge, 10).is_err());
        // Not JSON at all.
        assert!(load_graph_json("....", 10).is_err());
    }

    #[test]
    fn tsv_loader_accepts_comments_and_sidecars() {
        let edges = "# toy graph\n0\t1\n\n1\t2\n";
        let graph = graph_from_tsv(edges, None, None, 3).unwrap();
        assert_eq!(graph.num_nodes(), 3);
        assert_eq!(graph.edges(), &[(0, 1), (1, 2)]);
        // Degree features by default.
        assert_eq!(graph.feature_dim(), 4);

        let features = "1.0, 0.0\n0.0, 1.0\n0.5, 0.5\n0.0, 0.0\n";
        let labels = "0\n1\n1\n0\n";
        let full = graph_from_tsv(edges, Some(features), Some(labels), 3).unwrap();
        // Sidecar length wins over max endpoint + 1.
        assert_eq!(full.num_nodes(), 4);
        assert_eq!(full.labels(), Some(&[0, 1, 1, 0][..]));
        assert_eq!(full.features()[[2, 0]], 0.5);
    }

    #[test]
    fn tsv_loader_rejects_malformed_input() {
        assert!(load_edge_tsv("0 1\n").is_err()); // spaces, not a tab
        assert!(load_edge_tsv("0\t1\t2\n").is_err()); // three fields
        assert!(load_edge_tsv("a\tb\n").is_err());
        // Sidecar shorter than the edge list needs.
        assert!(graph_from_tsv("0\t3\n", Some("1.0\n1.0\n"), None, 3).is_err());
        // Disagreeing sidecar lengths.
        assert!(graph_from_tsv("0\t1\n", Some("1.0\n1.0\n"), Some("0\n"), 3).is_err());
    }

    #[test]
    fn right_reasons_cover_motif_nodes_and_round_trip() {
        let labeled = gen_tree_ba(&SynthConfig {
            tree_height: 3,
            motif_count: 2,
            grid_side: 3,
            ba_size: 5,
            ba_attach: 1,
            noise_edges: 0,
            seed: 4,
        })
        .unwrap();
        let map = right_reasons_document(&labeled);
        let motif_nodes: Vec<usize> = (0..labeled.graph.num_nodes())
            .filter(|&v| labeled.class_of[v] != 0)
            .collect();
        assert_eq!(map.keys().copied().collect::<Vec<_>>(), motif_nodes);
        for (&v, edges) in &map {
            let expected: Vec<(usize, usize)> = labeled.motif_edges[&labeled.motif_of[v]]
                .iter()
                .copied()
                .collect();
            assert_eq!(edges, &expected);
        }

        let text = right_reasons_to_json(&map).unwrap();
        assert_eq!(right_reasons_from_json(&text).unwrap(), map);
    }

    #[test]
    fn gcn_model_json_round_trip_preserves_predictions() {
        let graph = sample_graph();
        let labels = vec![true, true, true, true];
        let hyper = GcnHyper {
            epochs: 50,
            ..GcnHyper::default()
        };
        let (model, _) = train_gcn(&graph, &labels, &hyper).unwrap();
        let text = model_to_json(&gcn_to_document(&model, &hyper)).unwrap();
        let loaded = match model_from_json(&text).unwrap() {
            AnyModel::Gcn(m) => m,
            other => panic!("expected gcn, got {}", other.kind_name()),
        };
        let ego = extract_ego(&graph, 1, 2).unwrap();
        let before = model
            .predict(ego.adjacency(), ego.features(), ego.center())
            .unwrap();
        let after = loaded
            .predict(ego.adjacency(), ego.features(), ego.center())
            .unwrap();
        for c in 0..before.num_classes() {
            assert_abs_diff_eq!(before.prob(c), after.prob(c), epsilon = 1e-15);
        }
    }

    #[test]
    fn rule_model_json_round_trip_preserves_predictions() {
        let graph = sample_graph();
        let model = RuleModel::fit(&graph, 0.5, vec![1.0, 0.5], 1e-3, 3).unwrap();
        let text = model_to_json(&rules_to_document(&model)).unwrap();
        let loaded = match model_from_json(&text).unwrap() {
            AnyModel::Rules(m) => m,
            other => panic!("expected rules, got {}", other.kind_name()),
        };
        let x = model.seed_features(graph.num_nodes());
        let ego = extract_ego(&graph.with_features(x).unwrap(), 1, 2).unwrap();
        let before: ClassDistribution = model
            .predict(ego.adjacency(), ego.features(), ego.center())
            .unwrap();
        let after = loaded
            .predict(ego.adjacency(), ego.features(), ego.center())
            .unwrap();
        for c in 0..before.num_classes() {
            assert_abs_diff_eq!(before.prob(c), after.prob(c), epsilon = 1e-15);
        }
    }

    #[test]
    fn model_json_rejects_invalid_documents() {
        // Unknown kind tag.
        assert!(model_from_json(r#"{"kind": "forest", "trees": []}"#).is_err());
        // Negative rule weight.
        let bad = r#"{"kind": "rules", "rule_weights": [-1.0], "seeds": [], "num_classes": 2, "smoothing": 0.001}"#;
        assert!(model_from_json(bad).is_err());
        // Seed class out of range.
        let bad = r#"{"kind": "rules", "rule_weights": [1.0], "seeds": [[0, 7]], "num_classes": 2, "smoothing": 0.001}"#;
        assert!(model_from_json(bad).is_err());
        // Duplicate seed node.
        let bad = r#"{"kind": "rules", "rule_weights": [1.0], "seeds": [[0, 1], [0, 0]], "num_classes": 2, "smoothing": 0.001}"#;
        assert!(model_from_json(bad).is_err());
        // Zero smoothing.
        let bad = r#"{"kind": "rules", "rule_weights": [1.0], "seeds": [], "num_classes": 2, "smoothing": 0.0}"#;
        assert!(model_from_json(bad).is_err());
        // GCN layer dimension chain broken: 2x3 followed by 2x2.
        let bad = r#"{"kind": "gcn", "layers": [[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]], "hyper": {"hidden_dim": 3, "epochs": 1, "learning_rate": 0.01, "init_scale": 0.1, "seed": 0}}"#;
        assert!(model_from_json(bad).is_err());
    }

    #[test]
    fn explanation_json_round_trip_and_validation() {
        let graph = sample_graph();
        let labels = vec![true, true, true, true];
        let hyper = GcnHyper {
            epochs: 30,
            ..GcnHyper::default()
        };
        let (model, _) = train_gcn(&graph, &labels, &hyper).unwrap();
        let mut opts = RelexOptions::new(MaskSpec::sigmoid());
        opts.hops = 2;
        opts.num_samples = 20;
        opts.surrogate.steps = 10;
        opts.mask.iterations = 10;
        let expl = explain_node(&model, &graph, 1, &opts).unwrap();
        let text = explanation_to_json(&expl).unwrap();
        assert_eq!(explanation_from_json(&text).unwrap(), expl);

        // Out-of-range score rejected on load.
        let tampered = text.replace(
            &format!("\"score\": {}", expl.edges[0].score),
            "\"score\": 3.5",
        );
        assert_ne!(tampered, text);
        assert!(explanation_from_json(&tampered).is_err());
    }

    #[test]
    fn dot_output_is_structurally_sound() {
        let graph = sample_graph();
        let labels = vec![true, true, true, true];
        let (model, _) = train_gcn(
            &graph,
            &labels,
            &GcnHyper {
                epochs: 30,
                ..GcnHyper::default()
            },
        )
        .unwrap();
        let mut opts = RelexOptions::new(MaskSpec::sigmoid());
        opts.hops = 2;
        opts.num_samples = 20;
        opts.surrogate.steps = 10;
        opts.mask.iterations = 10;
        let expl = explain_node(&model, &graph, 1, &opts).unwrap();
        let dot = explanation_to_dot(&expl);

        assert!(dot.starts_with("graph explanation {\n"));
        assert!(dot.ends_with("}\n"));
        assert_eq!(dot.matches('{').count(), dot.matches('}').count());
        // Center node is declared and highlighted.
        assert!(dot.contains("  1 [style=filled"));
        // One edge statement per explanation edge.
        assert_eq!(dot.matches(" -- ").count(), expl.edges.len());
        // Deterministic.
        assert_eq!(dot, explanation_to_dot(&expl));
    }

    #[test]
    fn dot_darkness_grows_with_score() {
        assert_eq!(score_color(1.0), "#000000");
        assert_eq!(score_color(0.0), "#e6e6e6");
        let mid = score_color(0.5);
        assert!(mid > score_color(1.0) && mid < score_color(0.0));
    }
}
