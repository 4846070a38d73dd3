//! Seeded generators for the synthetic motif benchmarks.
//!
//! Each benchmark is a balanced binary tree (the "base" structure) with
//! motif subgraphs — grids, preferential-attachment clusters, or both —
//! hung off it by single attachment edges, plus optional random noise
//! edges. Node classes are purely structural: 0 for tree nodes, then one
//! class per motif kind. The generators record exactly which edges belong
//! to which motif, so evaluation can score explanations against ground
//! truth.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::stream_rng;

/// Which synthetic benchmark to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    TreeGrid,
    TreeBa,
    TreeGridBa,
}

impl BenchmarkKind {
    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkKind::TreeGrid => "tree-grid",
            BenchmarkKind::TreeBa => "tree-ba",
            BenchmarkKind::TreeGridBa => "tree-grid-ba",
        }
    }
}

/// Parameters for the synthetic generators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Height of the balanced binary base tree (2^(h+1) - 1 nodes).
    pub tree_height: usize,
    /// Motifs attached to the tree (of each kind, for the 3-class set).
    pub motif_count: usize,
    /// Side length of grid motifs.
    pub grid_side: usize,
    /// Node count of each preferential-attachment motif.
    pub ba_size: usize,
    /// Edges each new node adds during preferential attachment.
    pub ba_attach: usize,
    /// Random extra edges between motif nodes and tree nodes.
    pub noise_edges: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Benchmark defaults: height-8 tree, eighty 3x3 grids / size-5
    /// clusters, noise at 10% of the noise-free edge count.
    pub fn defaults(kind: BenchmarkKind) -> Self {
        let mut config = SynthConfig {
            tree_height: 8,
            motif_count: 80,
            grid_side: 3,
            ba_size: 5,
            // With a single attachment edge the clusters degenerate
            // into random trees, which classifiers can barely tell
            // apart from the base tree; two keeps them cyclic.
            ba_attach: 2,
            noise_edges: 0,
            seed: 0,
        };
        config.noise_edges = config.base_edge_count(kind) / 10;
        config
    }

    pub fn validate(&self) -> Result<()> {
        if self.tree_height < 2 {
            return Err(Error::InvalidConfig(format!(
                "tree_height {} must be at least 2",
                self.tree_height
            )));
        }
        if self.grid_side < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid_side {} must be at least 2",
                self.grid_side
            )));
        }
        if self.ba_size < 3 {
            return Err(Error::InvalidConfig(format!(
                "ba_size {} must be at least 3",
                self.ba_size
            )));
        }
        if self.ba_attach < 1 || self.ba_attach >= self.ba_size {
            return Err(Error::InvalidConfig(format!(
                "ba_attach {} must satisfy 1 <= ba_attach < ba_size ({})",
                self.ba_attach, self.ba_size
            )));
        }
        if self.motif_count < 1 {
            return Err(Error::InvalidConfig("motif_count must be at least 1".into()));
        }
        Ok(())
    }

    fn tree_nodes(&self) -> usize {
        (1 << (self.tree_height + 1)) - 1
    }

    fn grid_motif_edges(&self) -> usize {
        2 * self.grid_side * (self.grid_side - 1)
    }

    fn ba_motif_edges(&self) -> usize {
        (self.ba_size - self.ba_attach) * self.ba_attach
    }

    /// Edge count before noise: tree + motif internals + one attachment
    /// per motif.
    pub fn base_edge_count(&self, kind: BenchmarkKind) -> usize {
        let tree = self.tree_nodes() - 1;
        match kind {
            BenchmarkKind::TreeGrid => {
                tree + self.motif_count * (self.grid_motif_edges() + 1)
            }
            BenchmarkKind::TreeBa => tree + self.motif_count * (self.ba_motif_edges() + 1),
            BenchmarkKind::TreeGridBa => {
                tree + self.motif_count * (self.grid_motif_edges() + self.ba_motif_edges() + 2)
            }
        }
    }
}

/// A generated benchmark graph with its ground-truth bookkeeping.
///
/// The three edge families — intra-motif edges (the base tree counts as
/// motif 0), attachment edges, and noise edges — partition the full edge
/// set.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    pub graph: Graph,
    /// Class per node: tree = 0, then one class per motif kind.
    pub class_of: Vec<usize>,
    /// Motif id per node (0 = the base tree).
    pub motif_of: Vec<usize>,
    /// Intra-motif edges keyed by motif id, canonical (min, max) pairs.
    pub motif_edges: BTreeMap<usize, BTreeSet<(usize, usize)>>,
    /// Single random motif-to-tree edge per motif.
    pub attachment_edges: BTreeSet<(usize, usize)>,
    /// Random extra edges, disjoint from the other two families.
    pub noise_edges: BTreeSet<(usize, usize)>,
}

impl LabeledGraph {
    /// Nodes of a given class, ascending.
    pub fn nodes_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.class_of.len())
            .filter(|&v| self.class_of[v] == class)
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.class_of.iter().max().map_or(0, |m| m + 1)
    }

    /// Rebuilds the ground-truth bookkeeping from a graph that carries
    /// labels and motif ids (e.g. one re-loaded from disk).
    ///
    /// Intra-motif edges are exactly the edges whose endpoints share a
    /// motif — the generators never place a noise edge inside a motif —
    /// so `motif_edges` is recovered losslessly. Cross-motif edges
    /// cannot be split back into attachments versus noise; they are all
    /// filed under `attachment_edges`, which nothing downstream of
    /// generation reads.
    pub fn reconstruct(graph: Graph) -> Result<Self> {
        let labels = graph
            .labels()
            .ok_or_else(|| Error::InvalidConfig("graph carries no labels".into()))?
            .to_vec();
        let motif_of = graph
            .motif_of()
            .ok_or_else(|| Error::InvalidConfig("graph carries no motif ids".into()))?
            .to_vec();
        let mut motif_edges: BTreeMap<usize, BTreeSet<(usize, usize)>> = BTreeMap::new();
        let mut attachment_edges = BTreeSet::new();
        for &(u, v) in graph.edges() {
            if motif_of[u] == motif_of[v] {
                motif_edges.entry(motif_of[u]).or_default().insert((u, v));
            } else {
                attachment_edges.insert((u, v));
            }
        }
        Ok(LabeledGraph {
            class_of: labels,
            motif_of,
            motif_edges,
            attachment_edges,
            noise_edges: BTreeSet::new(),
            graph,
        })
    }
}

fn canonical(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// Emits heap-layout tree edges: node i has children 2i+1 and 2i+2.
fn tree_edges(tree_nodes: usize) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for i in 0..tree_nodes {
        for child in [2 * i + 1, 2 * i + 2] {
            if child < tree_nodes {
                edges.insert((i, child));
            }
        }
    }
    edges
}

/// Grid motif edges over nodes base..base+side^2 in row-major order.
fn grid_edges(base: usize, side: usize) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for r in 0..side {
        for c in 0..side {
            let id = base + r * side + c;
            if c + 1 < side {
                edges.insert((id, id + 1));
            }
            if r + 1 < side {
                edges.insert((id, id + side));
            }
        }
    }
    edges
}

/// Preferential-attachment motif over nodes base..base+size. The first
/// `attach` nodes seed the process; each later node draws `attach`
/// distinct earlier targets with probability proportional to degree + 1.
fn ba_edges(base: usize, size: usize, attach: usize, rng: &mut ChaCha8Rng) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    let mut degree = vec![0u64; size];
    for new in attach..size {
        let mut chosen: Vec<usize> = Vec::with_capacity(attach);
        for _ in 0..attach {
            let total: u64 = (0..new)
                .filter(|t| !chosen.contains(t))
                .map(|t| degree[t] + 1)
                .sum();
            let mut ticket = rng.gen_range(0..total);
            let mut target = usize::MAX;
            for (t, &deg) in degree.iter().enumerate().take(new) {
                if chosen.contains(&t) {
                    continue;
                }
                let w = deg + 1;
                if ticket < w {
                    target = t;
                    break;
                }
                ticket -= w;
            }
            chosen.push(target);
        }
        for t in chosen {
            edges.insert((base + t, base + new));
            degree[t] += 1;
            degree[new] += 1;
        }
    }
    edges
}

enum MotifKind {
    Grid,
    Ba,
}

/// Shared generator body: lays out the tree, appends motifs of the
/// requested kinds, attaches each motif by one random edge, then sprays
/// noise edges between motif and tree nodes.
fn generate_impl(config: &SynthConfig, kinds: &[(MotifKind, usize)]) -> Result<LabeledGraph> {
    config.validate()?;
    let tree_nodes = config.tree_nodes();

    let mut class_of = vec![0usize; tree_nodes];
    let mut motif_of = vec![0usize; tree_nodes];
    let mut motif_edges: BTreeMap<usize, BTreeSet<(usize, usize)>> = BTreeMap::new();
    motif_edges.insert(0, tree_edges(tree_nodes));

    // Streams: one per motif for internal growth, then one for
    // attachments and one for noise.
    let total_motifs: usize = kinds.len() * config.motif_count;
    let attach_stream = total_motifs as u64 + 1;
    let noise_stream = total_motifs as u64 + 2;

    let mut next_node = tree_nodes;
    let mut motif_nodes_start = Vec::new(); // (first node, size) per motif id >= 1
    let mut motif_id = 0usize;
    for (kind, class) in kinds {
        for _ in 0..config.motif_count {
            motif_id += 1;
            let base = next_node;
            let size = match kind {
                MotifKind::Grid => config.grid_side * config.grid_side,
                MotifKind::Ba => config.ba_size,
            };
            let edges = match kind {
                MotifKind::Grid => grid_edges(base, config.grid_side),
                MotifKind::Ba => {
                    let mut rng = stream_rng(config.seed, motif_id as u64);
                    ba_edges(base, size, config.ba_attach, &mut rng)
                }
            };
            motif_edges.insert(motif_id, edges);
            motif_nodes_start.push((base, size));
            for _ in 0..size {
                class_of.push(*class);
                motif_of.push(motif_id);
            }
            next_node += size;
        }
    }
    let num_nodes = next_node;

    let mut all_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for set in motif_edges.values() {
        all_edges.extend(set.iter().copied());
    }

    let mut attachment_edges = BTreeSet::new();
    let mut rng = stream_rng(config.seed, attach_stream);
    for &(base, size) in &motif_nodes_start {
        let motif_node = base + rng.gen_range(0..size);
        let tree_node = rng.gen_range(0..tree_nodes);
        let e = canonical(motif_node, tree_node);
        attachment_edges.insert(e);
        all_edges.insert(e);
    }

    let mut noise_edges = BTreeSet::new();
    let mut rng = stream_rng(config.seed, noise_stream);
    let motif_node_count = num_nodes - tree_nodes;
    let mut attempts = 0usize;
    let attempt_cap = 1000 * config.noise_edges.max(1);
    while noise_edges.len() < config.noise_edges {
        attempts += 1;
        if attempts > attempt_cap {
            return Err(Error::InvalidConfig(format!(
                "could not place {} noise edges (graph too small)",
                config.noise_edges
            )));
        }
        let motif_node = tree_nodes + rng.gen_range(0..motif_node_count);
        let tree_node = rng.gen_range(0..tree_nodes);
        let e = canonical(motif_node, tree_node);
        if all_edges.contains(&e) {
            continue;
        }
        all_edges.insert(e);
        noise_edges.insert(e);
    }

    let edge_list: Vec<(usize, usize)> = all_edges.into_iter().collect();
    let graph = Graph::build(
        num_nodes,
        &edge_list,
        None,
        Some(class_of.clone()),
        Some(motif_of.clone()),
    )?;
    Ok(LabeledGraph {
        graph,
        class_of,
        motif_of,
        motif_edges,
        attachment_edges,
        noise_edges,
    })
}

/// Balanced binary tree with grid motifs: classes tree = 0, grid = 1.
pub fn gen_tree_grid(config: &SynthConfig) -> Result<LabeledGraph> {
    generate_impl(config, &[(MotifKind::Grid, 1)])
}

/// Balanced binary tree with preferential-attachment motifs: classes
/// tree = 0, cluster = 1.
pub fn gen_tree_ba(config: &SynthConfig) -> Result<LabeledGraph> {
    generate_impl(config, &[(MotifKind::Ba, 1)])
}

/// Three-class benchmark: `motif_count` grids and `motif_count`
/// preferential-attachment motifs on one tree; classes tree = 0,
/// grid = 1, cluster = 2.
pub fn gen_tree_grid_ba(config: &SynthConfig) -> Result<LabeledGraph> {
    generate_impl(config, &[(MotifKind::Grid, 1), (MotifKind::Ba, 2)])
}

/// Dispatch by benchmark kind.
pub fn generate(kind: BenchmarkKind, config: &SynthConfig) -> Result<LabeledGraph> {
    match kind {
        BenchmarkKind::TreeGrid => gen_tree_grid(config),
        BenchmarkKind::TreeBa => gen_tree_ba(config),
        BenchmarkKind::TreeGridBa => gen_tree_grid_ba(config),
    }
}

/// Ground-truth explanation for a node: the intra-motif edges of its
/// motif that fall inside its `hops`-hop ego graph. For tree nodes these
/// are the nearby tree edges.
pub fn right_reason(
    labeled: &LabeledGraph,
    node_id: usize,
    hops: usize,
) -> Result<BTreeSet<(usize, usize)>> {
    if node_id >= labeled.graph.num_nodes() {
        return Err(Error::NodeOutOfRange {
            id: node_id,
            num_nodes: labeled.graph.num_nodes(),
        });
    }
    let ego = crate::graph::extract_ego(&labeled.graph, node_id, hops)?;
    let in_ego: BTreeSet<usize> = ego.node_map().iter().copied().collect();
    let motif = labeled.motif_of[node_id];
    Ok(labeled.motif_edges[&motif]
        .iter()
        .copied()
        .filter(|&(u, v)| in_ego.contains(&u) && in_ego.contains(&v))
        .collect())
}
