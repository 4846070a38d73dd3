//! Graph representation, ego-graph extraction, mask application, and
//! adjacency normalization shared by every other module.
//!
//! Graphs are undirected, single-relation, and attributed. Per-ego
//! computation graphs are stored as dense symmetric matrices; everything
//! downstream (black boxes, surrogates, masks) consumes only these
//! matrices, never global state.

use ndarray::Array2;
use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

/// Undirected attributed graph with optional per-node class labels and
/// motif membership.
///
/// Edges are canonicalized on construction: deduplicated and stored with
/// the smaller endpoint first. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    motif_of: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a canonicalized graph from an edge list.
    ///
    /// `features` defaults to a single constant-1 column when absent.
    /// Rejects self-loops, out-of-range endpoints, and feature matrices
    /// whose row count differs from `num_nodes`.
    pub fn build(
        num_nodes: usize,
        edge_list: &[(usize, usize)],
        features: Option<Array2<f64>>,
        labels: Option<Vec<usize>>,
        motif_of: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for &(u, v) in edge_list {
            if u >= num_nodes {
                return Err(Error::NodeOutOfRange {
                    id: u,
                    num_nodes,
                });
            }
            if v >= num_nodes {
                return Err(Error::NodeOutOfRange {
                    id: v,
                    num_nodes,
                });
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            set.insert((u.min(v), u.max(v)));
        }
        let features = match features {
            Some(f) => {
                if f.nrows() != num_nodes {
                    return Err(Error::ShapeMismatch {
                        context: "feature matrix".into(),
                        expected: format!("{} rows", num_nodes),
                        got: format!("{} rows", f.nrows()),
                    });
                }
                f
            }
            None => Array2::ones((num_nodes, 1)),
        };
        if let Some(ref l) = labels {
            if l.len() != num_nodes {
                return Err(Error::ShapeMismatch {
                    context: "labels".into(),
                    expected: format!("{} entries", num_nodes),
                    got: format!("{} entries", l.len()),
                });
            }
        }
        if let Some(ref m) = motif_of {
            if m.len() != num_nodes {
                return Err(Error::ShapeMismatch {
                    context: "motif ids".into(),
                    expected: format!("{} entries", num_nodes),
                    got: format!("{} entries", m.len()),
                });
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut adj = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for n in &mut adj {
            n.sort_unstable();
        }
        Ok(Graph {
            num_nodes,
            edges,
            adj,
            features,
            labels,
            motif_of,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list: deduplicated, smaller endpoint first, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && self.adj[u].binary_search(&v).is_ok()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn motif_of(&self) -> Option<&[usize]> {
        self.motif_of.as_deref()
    }

    /// Replaces the feature matrix, keeping the topology. Used to swap in
    /// model-specific node encodings (e.g. observed-class indicators).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.num_nodes {
            return Err(Error::ShapeMismatch {
                context: "feature matrix".into(),
                expected: format!("{} rows", self.num_nodes),
                got: format!("{} rows", features.nrows()),
            });
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }

    /// Dense symmetric 0/1 adjacency matrix of the whole graph.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.num_nodes, self.num_nodes));
        for &(u, v) in &self.edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        a
    }

    /// Breadth-first distances from `start`; unreachable nodes get `None`.
    pub fn bfs_distances(&self, start: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_nodes];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// The n-hop computation graph around one node: a dense symmetric 0/1
/// adjacency, the node features, and the local-to-global node map.
///
/// Local index 0 is always the center. Every non-center node is reachable
/// from the center within `hops` edges.
#[derive(Debug, Clone)]
pub struct EgoGraph {
    center: usize,
    adjacency: Array2<f64>,
    features: Array2<f64>,
    node_map: Vec<usize>,
    hops: usize,
}

impl EgoGraph {
    pub fn center(&self) -> usize {
        self.center
    }

    /// Dense symmetric 0/1 adjacency with zero diagonal.
    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// Local index -> global node id.
    pub fn node_map(&self) -> &[usize] {
        &self.node_map
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn num_nodes(&self) -> usize {
        self.node_map.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    /// Local edges as (p, q) pairs with p < q, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.num_nodes();
        let mut out = Vec::new();
        for p in 0..n {
            for q in (p + 1)..n {
                if self.adjacency[[p, q]] != 0.0 {
                    out.push((p, q));
                }
            }
        }
        out
    }

    /// Global node id of a local index.
    pub fn global_id(&self, local: usize) -> usize {
        self.node_map[local]
    }

    /// Local index of a global node id, if present in the ego graph.
    pub fn local_index(&self, global: usize) -> Option<usize> {
        self.node_map.iter().position(|&g| g == global)
    }
}

/// Extracts the induced subgraph on all nodes within `hops` of `node_id`.
///
/// Nodes are ordered by breadth-first discovery, so the center is local
/// index 0 and the ordering is deterministic.
pub fn extract_ego(graph: &Graph, node_id: usize, hops: usize) -> Result<EgoGraph> {
    if node_id >= graph.num_nodes() {
        return Err(Error::NodeOutOfRange {
            id: node_id,
            num_nodes: graph.num_nodes(),
        });
    }
    let mut node_map = vec![node_id];
    let mut local_of = vec![usize::MAX; graph.num_nodes()];
    local_of[node_id] = 0;
    let mut dist = vec![usize::MAX; graph.num_nodes()];
    dist[node_id] = 0;
    let mut queue = VecDeque::from([node_id]);
    while let Some(u) = queue.pop_front() {
        if dist[u] == hops {
            continue;
        }
        for &v in graph.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                local_of[v] = node_map.len();
                node_map.push(v);
                queue.push_back(v);
            }
        }
    }
    let p = node_map.len();
    let mut adjacency = Array2::zeros((p, p));
    for (lp, &gp) in node_map.iter().enumerate() {
        for &gq in graph.neighbors(gp) {
            let lq = local_of[gq];
            if lq != usize::MAX {
                adjacency[[lp, lq]] = 1.0;
            }
        }
    }
    let mut features = Array2::zeros((p, graph.feature_dim()));
    for (lp, &gp) in node_map.iter().enumerate() {
        features.row_mut(lp).assign(&graph.features().row(gp));
    }
    Ok(EgoGraph {
        center: 0,
        adjacency,
        features,
        node_map,
        hops,
    })
}

/// Per-edge importance scores over an ego graph: a dense symmetric matrix
/// with entries in [0, 1], zero wherever the adjacency is zero.
#[derive(Debug, Clone)]
pub struct EdgeScores {
    values: Array2<f64>,
}

impl EdgeScores {
    /// Validates symmetry, range, and support before wrapping the matrix.
    pub fn from_matrix(ego: &EgoGraph, values: Array2<f64>) -> Result<Self> {
        let p = ego.num_nodes();
        if values.dim() != (p, p) {
            return Err(Error::ShapeMismatch {
                context: "edge scores".into(),
                expected: format!("{}x{}", p, p),
                got: format!("{}x{}", values.nrows(), values.ncols()),
            });
        }
        for i in 0..p {
            for j in 0..p {
                let v = values[[i, j]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!(
                        "edge score {} at ({}, {}) outside [0, 1]",
                        v, i, j
                    )));
                }
                if (values[[i, j]] - values[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "edge scores not symmetric at ({}, {})",
                        i, j
                    )));
                }
                if v > 0.0 && ego.adjacency()[[i, j]] == 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "nonzero score at non-edge ({}, {})",
                        i, j
                    )));
                }
            }
        }
        Ok(EdgeScores { values })
    }

    /// Builds scores from one value per edge, in `ego.edges()` order.
    pub fn from_edge_values(ego: &EgoGraph, per_edge: &[f64]) -> Result<Self> {
        let edges = ego.edges();
        if per_edge.len() != edges.len() {
            return Err(Error::ShapeMismatch {
                context: "per-edge scores".into(),
                expected: format!("{} values", edges.len()),
                got: format!("{} values", per_edge.len()),
            });
        }
        let p = ego.num_nodes();
        let mut values = Array2::zeros((p, p));
        for (&(u, v), &s) in edges.iter().zip(per_edge) {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidConfig(format!(
                    "edge score {} outside [0, 1]",
                    s
                )));
            }
            values[[u, v]] = s;
            values[[v, u]] = s;
        }
        Ok(EdgeScores { values })
    }

    /// Constant score on every edge of the ego graph.
    pub fn constant(ego: &EgoGraph, value: f64) -> Result<Self> {
        let per_edge = vec![value; ego.num_edges()];
        Self::from_edge_values(ego, &per_edge)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// One score per edge, in `ego.edges()` order.
    pub fn per_edge(&self, ego: &EgoGraph) -> Vec<f64> {
        ego.edges()
            .iter()
            .map(|&(u, v)| self.values[[u, v]])
            .collect()
    }
}

/// Entrywise product of the ego adjacency and the mask scores.
pub fn apply_mask(ego: &EgoGraph, scores: &EdgeScores) -> Result<Array2<f64>> {
    if scores.values().dim() != ego.adjacency().dim() {
        return Err(Error::ShapeMismatch {
            context: "apply_mask".into(),
            expected: format!("{:?}", ego.adjacency().dim()),
            got: format!("{:?}", scores.values().dim()),
        });
    }
    Ok(ego.adjacency() * scores.values())
}

/// Symmetric renormalized adjacency with added self-loops: the propagation
/// matrix D^(-1/2) (A + I) D^(-1/2), where D is the diagonal degree matrix
/// of A + I. Self-loop addition keeps every degree positive, so the result
/// is defined for any entrywise-nonnegative input.
pub fn normalize_adjacency(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut inv_sqrt_deg = vec![0.0; n];
    for (i, slot) in inv_sqrt_deg.iter_mut().enumerate() {
        let d = 1.0 + a.row(i).sum();
        *slot = 1.0 / d.sqrt();
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let v = a[[i, j]] + if i == j { 1.0 } else { 0.0 };
            if v != 0.0 {
                out[[i, j]] = v * inv_sqrt_deg[i] * inv_sqrt_deg[j];
            }
        }
    }
    out
}
