//! The RelEx explainer.
//!
//! To explain a black-box prediction at a node: sample connected
//! perturbations of its ego network, query the black box on each, fit a
//! small differentiable surrogate to the responses, then learn a sparse
//! edge mask through the frozen surrogate. Two mask parameterizations
//! are provided — a sigmoid relaxation that is thresholded afterwards,
//! and a Gumbel relaxation that anneals toward hard 0/1 edges — plus a
//! diversity objective that pushes successive masks apart.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gumbel_pair_noise, NodeId, Optimizer, Param, Tape};
use crate::blackbox::{BlackBoxModel, ClassDistribution, CountingModel};
use crate::error::{Error, Result};
use crate::graph::{extract_ego, EdgeScores, EgoGraph, Graph};
use crate::rng::{task_rng, TaskPurpose};

// ---------------------------------------------------------------------
// Perturbation sampling
// ---------------------------------------------------------------------

/// One BFS perturbation of an ego adjacency.
///
/// Starting from the center, each edge gets a single independent
/// keep-with-probability-`keep_prob` trial the first time it becomes
/// reachable from an already-kept node. The kept edges always form one
/// connected subgraph containing the center; unreached nodes end up
/// isolated (all-zero rows).
pub fn sample_perturbation(
    ego: &EgoGraph,
    keep_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "keep_prob {} outside (0, 1]",
            keep_prob
        )));
    }
    let n = ego.num_nodes();
    let a = ego.adjacency();
    let mut sample = Array2::zeros((n, n));
    let mut kept = vec![false; n];
    let mut tried = std::collections::BTreeSet::new();
    kept[ego.center()] = true;
    let mut queue = std::collections::VecDeque::from([ego.center()]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if a[[u, v]] == 0.0 {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if !tried.insert(key) {
                continue;
            }
            if rng.gen_bool(keep_prob) {
                sample[[u, v]] = a[[u, v]];
                sample[[v, u]] = a[[v, u]];
                if !kept[v] {
                    kept[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    Ok(sample)
}

/// Exact outcome distribution of [`sample_perturbation`]: every
/// reachable result of the BFS trial sequence with its probability.
///
/// The trial tree is explored exhaustively, so this is exponential in
/// the edge count; egos with more than 16 edges are rejected. Useful as
/// a ground-truth reference for anything defined as an expectation over
/// perturbations.
pub fn enumerate_perturbations(
    ego: &EgoGraph,
    keep_prob: f64,
) -> Result<Vec<(Array2<f64>, f64)>> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "keep_prob {} outside (0, 1]",
            keep_prob
        )));
    }
    if ego.num_edges() > 16 {
        return Err(Error::InvalidConfig(format!(
            "exact enumeration is exponential in edges; {} exceeds the limit of 16",
            ego.num_edges()
        )));
    }
    let mut decided = std::collections::BTreeMap::new();
    let mut out = Vec::new();
    enumerate_rec(ego, keep_prob, &mut decided, &mut out);
    Ok(out)
}

/// Replays the BFS with predetermined trial outcomes, branching on the
/// first trial not yet decided. Only trials actually reached on a path
/// contribute to its probability.
fn enumerate_rec(
    ego: &EgoGraph,
    keep_prob: f64,
    decided: &mut std::collections::BTreeMap<(usize, usize), bool>,
    out: &mut Vec<(Array2<f64>, f64)>,
) {
    let n = ego.num_nodes();
    let a = ego.adjacency();
    let mut sample = Array2::zeros((n, n));
    let mut kept = vec![false; n];
    let mut tried = std::collections::BTreeSet::new();
    let mut used = Vec::new();
    kept[ego.center()] = true;
    let mut queue = std::collections::VecDeque::from([ego.center()]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if a[[u, v]] == 0.0 {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if !tried.insert(key) {
                continue;
            }
            let outcome = match decided.get(&key) {
                Some(&o) => o,
                None => {
                    for o in [true, false] {
                        decided.insert(key, o);
                        enumerate_rec(ego, keep_prob, decided, out);
                    }
                    decided.remove(&key);
                    return;
                }
            };
            used.push(outcome);
            if outcome {
                sample[[u, v]] = a[[u, v]];
                sample[[v, u]] = a[[v, u]];
                if !kept[v] {
                    kept[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    let prob = used
        .iter()
        .map(|&o| if o { keep_prob } else { 1.0 - keep_prob })
        .product();
    out.push((sample, prob));
}

/// Perturbed adjacencies paired with the black box's response to each.
#[derive(Debug, Clone)]
pub struct PerturbationDataset {
    pub samples: Vec<(Array2<f64>, ClassDistribution)>,
    pub keep_prob: f64,
}

/// Draws `n` perturbations of `ego` and queries the black box on each
/// (center features pass through unmodified).
pub fn build_dataset(
    ego: &EgoGraph,
    blackbox: &dyn BlackBoxModel,
    n: usize,
    keep_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PerturbationDataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("dataset needs at least one sample".into()));
    }
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let perturbed = sample_perturbation(ego, keep_prob, rng)?;
        let response = blackbox.predict(&perturbed, ego.features(), ego.center())?;
        samples.push((perturbed, response));
    }
    Ok(PerturbationDataset { samples, keep_prob })
}

// ---------------------------------------------------------------------
// Surrogate
// ---------------------------------------------------------------------

/// Architecture and training knobs for the local surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateHyper {
    pub hidden_dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub init_scale: f64,
}

impl Default for SurrogateHyper {
    fn default() -> Self {
        SurrogateHyper {
            hidden_dim: 20,
            steps: 300,
            batch_size: 32,
            learning_rate: 0.01,
            holdout_fraction: 0.2,
            init_scale: 0.1,
        }
    }
}

/// Local differentiable stand-in for the black box around one ego graph.
///
/// A GCN whose depth matches the ego radius, with every layer's output
/// column-concatenated before the readout (so shallow structure is not
/// washed out by depth), trained to match the black box's distribution
/// at the center node. Unlike the black box, each layer and the readout
/// carry a bias: the surrogate must be able to represent constant
/// responses exactly, which a bias-free net cannot do on constant
/// features.
#[derive(Debug, Clone)]
pub struct Surrogate {
    layer_weights: Vec<Array2<f64>>,
    layer_biases: Vec<Array2<f64>>,
    readout: Array2<f64>,
    readout_bias: Array2<f64>,
}

/// Tape handles for one pushed copy of the surrogate parameters.
struct SurrogateNodes {
    ws: Vec<NodeId>,
    bs: Vec<NodeId>,
    readout: NodeId,
    readout_bias: NodeId,
}

impl Surrogate {
    pub fn num_classes(&self) -> usize {
        self.readout.ncols()
    }

    pub fn depth(&self) -> usize {
        self.layer_weights.len()
    }

    /// Records the forward pass from an already-normalized adjacency to
    /// center-row logits (1 x classes).
    fn forward_normalized(
        &self,
        tape: &mut Tape,
        a_norm: NodeId,
        features: NodeId,
        center: usize,
        num_nodes: usize,
        nodes: &SurrogateNodes,
    ) -> Result<NodeId> {
        // Column of ones broadcasts each 1 x h bias to every node row.
        let ones_col = tape.input(Array2::ones((num_nodes, 1)));
        let mut h = features;
        let mut center_rows = Vec::with_capacity(nodes.ws.len());
        for (&w, &b) in nodes.ws.iter().zip(&nodes.bs) {
            let prop = tape.matmul(a_norm, h)?;
            let lin = tape.matmul(prop, w)?;
            let bias = tape.matmul(ones_col, b)?;
            let pre = tape.add(lin, bias)?;
            h = tape.relu(pre);
            center_rows.push(tape.row_select(h, center)?);
        }
        let cat = tape.concat_cols(&center_rows)?;
        let logits = tape.matmul(cat, nodes.readout)?;
        tape.add(logits, nodes.readout_bias)
    }

    /// Records the forward pass from a raw (possibly masked) adjacency
    /// onto an external tape, returning the center-row logits node.
    ///
    /// Public so custom objectives (and gradient checks) can be built
    /// against a trained surrogate.
    pub fn forward_raw(
        &self,
        tape: &mut Tape,
        adjacency: NodeId,
        features: NodeId,
        center: usize,
        num_nodes: usize,
    ) -> Result<NodeId> {
        let a_norm = tape.normalize_adjacency(adjacency)?;
        let nodes = SurrogateNodes {
            ws: self
                .layer_weights
                .iter()
                .map(|w| tape.input(w.clone()))
                .collect(),
            bs: self
                .layer_biases
                .iter()
                .map(|b| tape.input(b.clone()))
                .collect(),
            readout: tape.input(self.readout.clone()),
            readout_bias: tape.input(self.readout_bias.clone()),
        };
        self.forward_normalized(tape, a_norm, features, center, num_nodes, &nodes)
    }

    /// Class distribution at `center` for a raw adjacency.
    pub fn predict(
        &self,
        adjacency: &Array2<f64>,
        features: &Array2<f64>,
        center: usize,
    ) -> Result<ClassDistribution> {
        let mut tape = Tape::new();
        let n = adjacency.nrows();
        let a = tape.input(adjacency.clone());
        let x = tape.input(features.clone());
        let logits = self.forward_raw(&mut tape, a, x, center, n)?;
        let row: Vec<f64> = tape.value(logits).row(0).to_vec();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        ClassDistribution::new(exps.iter().map(|e| e / sum).collect())
    }
}

/// Training summary for a surrogate.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateReport {
    /// Argmax agreement with the black box on held-out samples.
    pub fidelity: f64,
    /// Mean KL(black box || surrogate) on held-out samples.
    pub holdout_kl: f64,
}

/// Fits a surrogate to a perturbation dataset by minimizing the KL
/// divergence from the black-box distribution at the center (the
/// target-entropy term is constant, so cross-entropy is minimized).
///
/// The last `holdout_fraction` of samples is held out for the fidelity
/// estimate; with too few samples to hold any out, fidelity is measured
/// on the training samples instead.
pub fn train_surrogate(
    ego: &EgoGraph,
    dataset: &PerturbationDataset,
    hyper: &SurrogateHyper,
    rng: &mut ChaCha8Rng,
) -> Result<(Surrogate, SurrogateReport)> {
    if dataset.samples.is_empty() {
        return Err(Error::InvalidConfig("empty perturbation dataset".into()));
    }
    if hyper.hidden_dim == 0 || hyper.batch_size == 0 {
        return Err(Error::InvalidConfig(
            "surrogate hidden_dim and batch_size must be positive".into(),
        ));
    }
    let num_classes = dataset.samples[0].1.num_classes();
    let depth = ego.hops().max(1);
    let feature_dim = ego.features().ncols();

    let mut dims = vec![(feature_dim, hyper.hidden_dim)];
    for _ in 1..depth {
        dims.push((hyper.hidden_dim, hyper.hidden_dim));
    }
    let readout_dim = (depth * hyper.hidden_dim, num_classes);

    // Parameter layout: layer weights, then layer biases (zero-started),
    // then readout weight, then readout bias.
    let mut params: Vec<Param> = dims
        .iter()
        .chain(std::iter::once(&readout_dim))
        .map(|&(r, c)| {
            Param::new(Array2::from_shape_fn((r, c), |_| {
                rng.gen_range(-hyper.init_scale..hyper.init_scale)
            }))
        })
        .collect::<Result<_>>()?;
    let readout_param = params.pop().unwrap();
    for _ in 0..depth {
        params.push(Param::new(Array2::zeros((1, hyper.hidden_dim)))?);
    }
    params.push(readout_param);
    params.push(Param::new(Array2::zeros((1, num_classes)))?);

    // Normalized adjacencies are constant across steps; compute once.
    let normalized: Vec<Array2<f64>> = dataset
        .samples
        .iter()
        .map(|(a, _)| crate::graph::normalize_adjacency(a))
        .collect();

    let holdout = ((dataset.samples.len() as f64) * hyper.holdout_fraction).floor() as usize;
    let train_count = dataset.samples.len() - holdout;
    let mut order: Vec<usize> = (0..train_count).collect();

    let template = Surrogate {
        layer_weights: vec![Array2::zeros((0, 0)); depth],
        layer_biases: vec![Array2::zeros((0, 0)); depth],
        readout: Array2::zeros((0, 0)),
        readout_bias: Array2::zeros((0, 0)),
    };
    let mut optimizer = Optimizer::adam(hyper.learning_rate);
    let batch = hyper.batch_size.min(train_count);
    let mut cursor = 0usize;
    for _ in 0..hyper.steps {
        let mut tape = Tape::new();
        let param_nodes: Vec<NodeId> = params.iter().map(|p| p.push(&mut tape)).collect();
        let nodes = SurrogateNodes {
            ws: param_nodes[..depth].to_vec(),
            bs: param_nodes[depth..2 * depth].to_vec(),
            readout: param_nodes[2 * depth],
            readout_bias: param_nodes[2 * depth + 1],
        };
        let x = tape.input(ego.features().clone());
        let one = tape.input(Array2::ones((1, 1)));

        let mut losses = Vec::with_capacity(batch);
        for _ in 0..batch {
            if cursor == 0 {
                // Reshuffle at each pass over the training samples.
                for i in (1..order.len()).rev() {
                    order.swap(i, rng.gen_range(0..=i));
                }
            }
            let idx = order[cursor];
            cursor = (cursor + 1) % train_count;

            let a_norm = tape.input(normalized[idx].clone());
            let logits = template.forward_normalized(
                &mut tape,
                a_norm,
                x,
                ego.center(),
                ego.num_nodes(),
                &nodes,
            )?;
            let target = tape.input(Array2::from_shape_fn((1, num_classes), |(_, c)| {
                dataset.samples[idx].1.prob(c)
            }));
            losses.push(tape.softmax_cross_entropy(logits, target, one)?);
        }
        let coeffs = vec![1.0 / batch as f64; losses.len()];
        let loss = tape.scalar_combine(&losses, &coeffs)?;
        if !tape.scalar(loss).is_finite() {
            return Err(Error::NonFinite("surrogate training loss".into()));
        }
        tape.backward(loss)?;
        let grads: Vec<Array2<f64>> = param_nodes
            .iter()
            .map(|&node| tape.adjoint(node).clone())
            .collect();
        let mut refs: Vec<&mut Param> = params.iter_mut().collect();
        optimizer.step(&mut refs, &grads)?;
    }

    let readout_bias = params.pop().unwrap().value;
    let readout = params.pop().unwrap().value;
    let mut values: Vec<Array2<f64>> = params.into_iter().map(|p| p.value).collect();
    let layer_biases = values.split_off(depth);
    let surrogate = Surrogate {
        layer_weights: values,
        layer_biases,
        readout,
        readout_bias,
    };

    // Fidelity on the holdout (or the training set when nothing was
    // held out).
    let eval_range = if holdout > 0 {
        train_count..dataset.samples.len()
    } else {
        0..train_count
    };
    let mut agree = 0usize;
    let mut kl_sum = 0.0;
    let mut count = 0usize;
    for i in eval_range {
        let (a, target) = &dataset.samples[i];
        let pred = surrogate.predict(a, ego.features(), ego.center())?;
        if pred.argmax() == target.argmax() {
            agree += 1;
        }
        for c in 0..num_classes {
            let t = target.prob(c);
            if t > 0.0 {
                kl_sum += t * (t / pred.prob(c).max(1e-12)).ln();
            }
        }
        count += 1;
    }
    Ok((
        surrogate,
        SurrogateReport {
            fidelity: agree as f64 / count as f64,
            holdout_kl: kl_sum / count as f64,
        },
    ))
}

// ---------------------------------------------------------------------
// Mask learning
// ---------------------------------------------------------------------

/// Mask parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskKind {
    /// Soft mask M = sigmoid(W), binarized afterwards.
    Sigmoid,
    /// Per-edge two-category concrete relaxation with annealed
    /// temperature; hard 0/1 edges at evaluation time.
    Gumbel,
}

impl MaskKind {
    pub fn method_name(&self) -> &'static str {
        match self {
            MaskKind::Sigmoid => "relex-sigmoid",
            MaskKind::Gumbel => "relex-gumbel",
        }
    }
}

/// How soft scores become a hard edge set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binarization {
    /// Keep edges scoring strictly above the cutoff.
    Threshold(f64),
    /// Keep the k best edges (ties: higher score first, then smaller
    /// endpoint pair).
    TopK(usize),
}

/// Full mask-learning configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSpec {
    pub kind: MaskKind,
    /// Edge-sparsity (L1) regularization weight.
    pub l1_weight: f64,
    /// Group-sparsity (L2,1 over mask matrix rows) weight.
    pub l21_weight: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Geometric temperature schedule (Gumbel only).
    pub tau_initial: f64,
    pub tau_final: f64,
    /// Weight of the cross-entropy diversity term between masks.
    pub diversity_weight: f64,
    /// Plain gradient descent instead of the adaptive-moment default.
    pub plain_descent: bool,
    pub binarization: Binarization,
}

impl MaskSpec {
    pub fn sigmoid() -> Self {
        MaskSpec {
            kind: MaskKind::Sigmoid,
            l1_weight: 0.005,
            l21_weight: 0.001,
            learning_rate: 0.01,
            iterations: 300,
            tau_initial: 2.0,
            tau_final: 0.1,
            diversity_weight: 0.5,
            plain_descent: false,
            binarization: Binarization::Threshold(0.5),
        }
    }

    pub fn gumbel() -> Self {
        MaskSpec {
            kind: MaskKind::Gumbel,
            ..MaskSpec::sigmoid()
        }
    }
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec::gumbel()
    }
}

impl MaskSpec {

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("mask iterations must be >= 1".into()));
        }
        for (name, w) in [
            ("l1_weight", self.l1_weight),
            ("l21_weight", self.l21_weight),
            ("diversity_weight", self.diversity_weight),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidConfig(format!("{} must be nonnegative", name)));
            }
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.kind == MaskKind::Gumbel
            && !(self.tau_final > 0.0 && self.tau_initial >= self.tau_final)
        {
            return Err(Error::InvalidConfig(
                "temperature schedule must decrease toward a positive final value".into(),
            ));
        }
        if let Binarization::Threshold(t) = self.binarization {
            if !t.is_finite() {
                return Err(Error::InvalidConfig("threshold must be finite".into()));
            }
        }
        Ok(())
    }

    fn temperature(&self, iteration: usize) -> f64 {
        let steps = self.iterations.saturating_sub(1).max(1) as f64;
        self.tau_initial * (self.tau_final / self.tau_initial).powf(iteration as f64 / steps)
    }
}

/// One edge of an explanation, in global node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationEdge {
    pub u: usize,
    pub v: usize,
    pub score: f64,
    pub selected: bool,
}

/// An explanation of one prediction: soft edge scores, the hard
/// selection, and enough provenance to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub method: String,
    /// Explained node, in the original graph's ids.
    pub node: usize,
    pub hops: usize,
    pub edges: Vec<ExplanationEdge>,
    pub objective_trace: Vec<f64>,
    pub surrogate_fidelity: Option<f64>,
    /// Black-box queries consumed to produce this explanation.
    pub calls: u64,
    pub mask_spec: Option<MaskSpec>,
    pub seed: u64,
}

impl Explanation {
    /// Scores as an ego-local matrix for metric computations.
    pub fn to_edge_scores(&self, ego: &EgoGraph) -> Result<EdgeScores> {
        let mut per_edge = vec![0.0; ego.num_edges()];
        let local_edges = ego.edges();
        for e in &self.edges {
            let lu = ego.local_index(e.u);
            let lv = ego.local_index(e.v);
            let (lu, lv) = match (lu, lv) {
                (Some(a), Some(b)) => (a.min(b), a.max(b)),
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "explanation edge ({}, {}) outside ego graph",
                        e.u, e.v
                    )))
                }
            };
            match local_edges.binary_search(&(lu, lv)) {
                Ok(i) => per_edge[i] = e.score,
                Err(_) => {
                    return Err(Error::InvalidConfig(format!(
                        "explanation edge ({}, {}) is not an ego edge",
                        e.u, e.v
                    )))
                }
            }
        }
        EdgeScores::from_edge_values(ego, &per_edge)
    }

    /// Selected edges as canonical global pairs.
    pub fn selected_edges(&self) -> std::collections::BTreeSet<(usize, usize)> {
        self.edges
            .iter()
            .filter(|e| e.selected)
            .map(|e| (e.u.min(e.v), e.u.max(e.v)))
            .collect()
    }
}

/// Deterministic hard selection from soft per-edge scores.
///
/// Edges are ranked by score descending with ties broken by the smaller
/// endpoint pair; `TopK` larger than the edge count is clamped with a
/// warning.
pub fn binarize(
    edges: &[(usize, usize)],
    scores: &[f64],
    strategy: Binarization,
) -> Result<Vec<(usize, usize)>> {
    if edges.len() != scores.len() {
        return Err(Error::ShapeMismatch {
            context: "binarize".into(),
            expected: format!("{} scores", edges.len()),
            got: format!("{} scores", scores.len()),
        });
    }
    match strategy {
        Binarization::Threshold(t) => Ok(edges
            .iter()
            .zip(scores)
            .filter(|(_, &s)| s > t)
            .map(|(&e, _)| e)
            .collect()),
        Binarization::TopK(k) => {
            let k = if k > edges.len() {
                eprintln!(
                    "warning: top_k {} exceeds {} edges; keeping all",
                    k,
                    edges.len()
                );
                edges.len()
            } else {
                k
            };
            let mut order: Vec<usize> = (0..edges.len()).collect();
            order.sort_by(|&i, &j| {
                scores[j]
                    .partial_cmp(&scores[i])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| edges[i].cmp(&edges[j]))
            });
            let mut chosen: Vec<(usize, usize)> = order[..k].iter().map(|&i| edges[i]).collect();
            chosen.sort_unstable();
            Ok(chosen)
        }
    }
}

/// Objective value for a fixed per-edge mask assignment: center
/// cross-entropy through the surrogate plus both sparsity penalties.
/// This is the quantity mask learning minimizes (diversity aside), and
/// what brute-force subset search should compare against.
pub fn mask_objective(
    surrogate: &Surrogate,
    ego: &EgoGraph,
    target: &ClassDistribution,
    spec: &MaskSpec,
    edge_values: &[f64],
) -> Result<f64> {
    let edges = ego.edges();
    if edge_values.len() != edges.len() {
        return Err(Error::ShapeMismatch {
            context: "mask_objective".into(),
            expected: format!("{} edge values", edges.len()),
            got: format!("{}", edge_values.len()),
        });
    }
    let mut tape = Tape::new();
    let values = tape.input(Array2::from_shape_fn((edges.len(), 1), |(i, _)| {
        edge_values[i]
    }));
    let j = record_objective(surrogate, ego, target, spec, &mut tape, values, &[])?;
    Ok(tape.scalar(j))
}

/// Records CE + regularizers (+ diversity against `previous` score
/// vectors) for the per-edge mask values at `mask_edges`.
fn record_objective(
    surrogate: &Surrogate,
    ego: &EgoGraph,
    target: &ClassDistribution,
    spec: &MaskSpec,
    tape: &mut Tape,
    mask_edges: NodeId,
    previous: &[Vec<f64>],
) -> Result<NodeId> {
    let edges = ego.edges();
    let mask_matrix = tape.scatter_edges(mask_edges, &edges, ego.num_nodes())?;
    let a = tape.input(ego.adjacency().clone());
    let masked = tape.hadamard(a, mask_matrix)?;
    let x = tape.input(ego.features().clone());
    let logits = surrogate.forward_raw(tape, masked, x, ego.center(), ego.num_nodes())?;
    let t = tape.input(Array2::from_shape_fn((1, target.num_classes()), |(_, c)| {
        target.prob(c)
    }));
    let one = tape.input(Array2::ones((1, 1)));
    let ce = tape.softmax_cross_entropy(logits, t, one)?;
    let l1 = tape.l1_norm(mask_edges);
    let l21 = tape.l21_norm(mask_matrix);

    let mut terms = vec![ce, l1, l21];
    let mut coeffs = vec![1.0, spec.l1_weight, spec.l21_weight];
    for prev in previous {
        let prev_node = tape.input(Array2::from_shape_fn((prev.len(), 1), |(i, _)| prev[i]));
        let h = tape.binary_cross_entropy(mask_edges, prev_node)?;
        terms.push(h);
        coeffs.push(-spec.diversity_weight);
    }
    tape.scalar_combine(&terms, &coeffs)
}

/// Learns one edge mask through a frozen surrogate.
///
/// `target` is the black box's original prediction at the center as a
/// one-hot vector. Returns an explanation in global edge ids; the
/// caller fills in call counts and seed provenance.
pub fn learn_mask(
    surrogate: &Surrogate,
    ego: &EgoGraph,
    target: &ClassDistribution,
    spec: &MaskSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Explanation> {
    learn_mask_inner(surrogate, ego, target, spec, rng, &[])
}

fn learn_mask_inner(
    surrogate: &Surrogate,
    ego: &EgoGraph,
    target: &ClassDistribution,
    spec: &MaskSpec,
    rng: &mut ChaCha8Rng,
    previous: &[Vec<f64>],
) -> Result<Explanation> {
    spec.validate()?;
    let edges = ego.edges();
    let center_global = ego.global_id(ego.center());
    if edges.is_empty() {
        eprintln!(
            "warning: node {} has no ego edges; returning an empty explanation",
            center_global
        );
        return Ok(Explanation {
            method: spec.kind.method_name().into(),
            node: center_global,
            hops: ego.hops(),
            edges: Vec::new(),
            objective_trace: Vec::new(),
            surrogate_fidelity: None,
            calls: 0,
            mask_spec: Some(spec.clone()),
            seed: 0,
        });
    }

    let e = edges.len();
    let mut w = Param::new(Array2::zeros((e, 1)))?;
    let mut optimizer = if spec.plain_descent {
        Optimizer::sgd(spec.learning_rate)
    } else {
        Optimizer::adam(spec.learning_rate)
    };
    let mut trace = Vec::with_capacity(spec.iterations);
    for it in 0..spec.iterations {
        let mut tape = Tape::new();
        let w_node = w.push(&mut tape);
        let mask_edges = match spec.kind {
            MaskKind::Sigmoid => tape.sigmoid(w_node),
            MaskKind::Gumbel => {
                let noise = tape.input(gumbel_pair_noise(e, 1, rng));
                tape.gumbel_softmax_pair(w_node, noise, spec.temperature(it))?
            }
        };
        let j = record_objective(surrogate, ego, target, spec, &mut tape, mask_edges, previous)?;
        let value = tape.scalar(j);
        if !value.is_finite() {
            return Err(Error::NonFinite("mask objective".into()));
        }
        trace.push(value);
        tape.backward(j)?;
        let grad = tape.adjoint(w_node).clone();
        optimizer.step(&mut [&mut w], &[grad])?;
    }

    // Final scores: the soft sigmoid mask, or the Gumbel relaxation's
    // zero-temperature limit (hard 0/1 by logit sign).
    let scores: Vec<f64> = match spec.kind {
        MaskKind::Sigmoid => (0..e).map(|i| sigmoid(w.value[[i, 0]])).collect(),
        MaskKind::Gumbel => (0..e)
            .map(|i| if w.value[[i, 0]] > 0.0 { 1.0 } else { 0.0 })
            .collect(),
    };
    let selected = match spec.kind {
        MaskKind::Sigmoid => binarize(&edges, &scores, spec.binarization)?,
        MaskKind::Gumbel => edges
            .iter()
            .zip(&scores)
            .filter(|(_, &s)| s > 0.5)
            .map(|(&e, _)| e)
            .collect(),
    };
    let selected: std::collections::BTreeSet<(usize, usize)> = selected.into_iter().collect();

    let edges_out = edges
        .iter()
        .zip(&scores)
        .map(|(&(lu, lv), &score)| ExplanationEdge {
            u: ego.global_id(lu),
            v: ego.global_id(lv),
            score,
            selected: selected.contains(&(lu, lv)),
        })
        .collect();
    Ok(Explanation {
        method: spec.kind.method_name().into(),
        node: center_global,
        hops: ego.hops(),
        edges: edges_out,
        objective_trace: trace,
        surrogate_fidelity: None,
        calls: 0,
        mask_spec: Some(spec.clone()),
        seed: 0,
    })
}

/// Learns `t_count` masks sequentially, each repelled from its
/// predecessors' scores by the cross-entropy diversity term.
///
/// Every mask starts from an identical copy of the incoming RNG state,
/// so with `diversity_weight` 0 all masks coincide exactly.
pub fn learn_diverse_masks(
    surrogate: &Surrogate,
    ego: &EgoGraph,
    target: &ClassDistribution,
    spec: &MaskSpec,
    t_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Explanation>> {
    if t_count == 0 {
        return Err(Error::InvalidConfig("diverse masks need T >= 1".into()));
    }
    let snapshot = rng.clone();
    let mut explanations: Vec<Explanation> = Vec::with_capacity(t_count);
    let mut previous_scores: Vec<Vec<f64>> = Vec::with_capacity(t_count);
    for _ in 0..t_count {
        let mut mask_rng = snapshot.clone();
        let expl = learn_mask_inner(surrogate, ego, target, spec, &mut mask_rng, &previous_scores)?;
        previous_scores.push(expl.edges.iter().map(|e| e.score).collect());
        explanations.push(expl);
    }
    Ok(explanations)
}

/// Mean elementwise cross-entropy between two mask score vectors
/// (symmetrized), the quantity the diversity term drives up.
pub fn mean_mask_cross_entropy(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let h = |p: &[f64], t: &[f64]| -> f64 {
        p.iter()
            .zip(t)
            .map(|(&p, &t)| {
                let pc = p.clamp(1e-7, 1.0 - 1e-7);
                -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln())
            })
            .sum::<f64>()
    };
    (h(a, b) + h(b, a)) / (2.0 * a.len() as f64)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------------
// End-to-end pipeline
// ---------------------------------------------------------------------

/// Everything needed to explain one node end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelexOptions {
    pub hops: usize,
    /// Perturbation samples per node.
    pub num_samples: usize,
    pub keep_prob: f64,
    pub surrogate: SurrogateHyper,
    pub mask: MaskSpec,
    pub seed: u64,
}

impl Default for RelexOptions {
    fn default() -> Self {
        RelexOptions::new(MaskSpec::default())
    }
}

impl RelexOptions {
    pub fn new(mask: MaskSpec) -> Self {
        RelexOptions {
            hops: 3,
            num_samples: 1000,
            keep_prob: 0.5,
            surrogate: SurrogateHyper::default(),
            mask,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::InvalidConfig("num_samples must be >= 1".into()));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "keep_prob {} outside (0, 1]",
                self.keep_prob
            )));
        }
        self.mask.validate()
    }
}

/// Full RelEx pipeline for one node: ego extraction, perturbation
/// dataset, surrogate fit, mask learning.
pub fn explain_node(
    blackbox: &dyn BlackBoxModel,
    graph: &Graph,
    node: usize,
    opts: &RelexOptions,
) -> Result<Explanation> {
    let mut explanations = explain_node_diverse(blackbox, graph, node, opts, 1)?;
    Ok(explanations.pop().unwrap())
}

/// As [`explain_node`], returning `t_count` diversity-coupled masks.
pub fn explain_node_diverse(
    blackbox: &dyn BlackBoxModel,
    graph: &Graph,
    node: usize,
    opts: &RelexOptions,
    t_count: usize,
) -> Result<Vec<Explanation>> {
    opts.validate()?;
    let ego = extract_ego(graph, node, opts.hops)?;
    let counter = CountingModel::new(blackbox);
    let original = counter.predict(ego.adjacency(), ego.features(), ego.center())?;
    let target = ClassDistribution::one_hot(original.argmax(), original.num_classes());

    if ego.num_edges() == 0 {
        let mut rng = task_rng(opts.seed, node, TaskPurpose::Mask);
        let mut expl = learn_mask(&empty_surrogate(&target), &ego, &target, &opts.mask, &mut rng)?;
        expl.calls = counter.calls();
        expl.seed = opts.seed;
        return Ok(vec![expl; t_count]);
    }

    let mut pert_rng = task_rng(opts.seed, node, TaskPurpose::Perturbation);
    let dataset = build_dataset(&ego, &counter, opts.num_samples, opts.keep_prob, &mut pert_rng)?;

    let mut sur_rng = task_rng(opts.seed, node, TaskPurpose::Surrogate);
    let (surrogate, report) = train_surrogate(&ego, &dataset, &opts.surrogate, &mut sur_rng)?;

    let mut mask_rng = task_rng(opts.seed, node, TaskPurpose::Mask);
    let mut explanations =
        learn_diverse_masks(&surrogate, &ego, &target, &opts.mask, t_count, &mut mask_rng)?;
    for expl in &mut explanations {
        expl.surrogate_fidelity = Some(report.fidelity);
        expl.calls = counter.calls();
        expl.seed = opts.seed;
    }
    Ok(explanations)
}

/// Trivial surrogate used only to route the empty-ego case through the
/// same explanation constructor.
fn empty_surrogate(target: &ClassDistribution) -> Surrogate {
    Surrogate {
        layer_weights: vec![Array2::zeros((1, 1))],
        layer_biases: vec![Array2::zeros((1, 1))],
        readout: Array2::zeros((1, target.num_classes())),
        readout_bias: Array2::zeros((1, target.num_classes())),
    }
}
