//! Black-box node classifiers the explainers operate on.
//!
//! Two families behind one predict-only interface: a trainable 3-layer
//! GCN (differentiable, so gradient baselines apply) and a rule-based
//! evidence propagator in the spirit of collective relational
//! classifiers (deliberately non-differentiable). Explainers only ever
//! see `BlackBoxModel`, never the internals.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Optimizer, Param, Tape};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::stream_rng;

/// Probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    /// Validates simplex membership: nonnegative entries summing to 1
    /// within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidConfig("empty class distribution".into()));
        }
        let sum: f64 = probs.iter().sum();
        if !probs.iter().all(|p| p.is_finite() && *p >= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NonFinite(format!(
                "class distribution not on the simplex (sum {})",
                sum
            )));
        }
        Ok(ClassDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, class: usize) -> f64 {
        self.probs[class]
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Most probable class; ties resolve to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = c;
            }
        }
        best
    }

    /// One-hot distribution concentrated on `class`.
    pub fn one_hot(class: usize, num_classes: usize) -> Self {
        let mut probs = vec![0.0; num_classes];
        probs[class] = 1.0;
        ClassDistribution { probs }
    }
}

/// Predict-only view of a node classifier.
///
/// `predict` must be a pure function of the given (possibly masked or
/// perturbed) adjacency and features; models never reach back to the
/// graph they were trained on. `grad_adjacency` returns the edge-tied
/// gradient d(-log p_class(node))/dA: entry (p, q) is the derivative
/// with respect to the undirected edge weight, so the matrix is
/// symmetric. Only differentiable models provide it.
pub trait BlackBoxModel: Send + Sync {
    fn predict(
        &self,
        adjacency: &Array2<f64>,
        features: &Array2<f64>,
        node: usize,
    ) -> Result<ClassDistribution>;

    fn num_classes(&self) -> usize;

    fn differentiable(&self) -> bool {
        false
    }

    fn grad_adjacency(
        &self,
        _adjacency: &Array2<f64>,
        _features: &Array2<f64>,
        _node: usize,
        _class: usize,
    ) -> Result<Array2<f64>> {
        Err(Error::UnsupportedModel("grad_adjacency".into()))
    }
}

fn check_inputs(adjacency: &Array2<f64>, features: &Array2<f64>, node: usize) -> Result<()> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::ShapeMismatch {
            context: "adjacency".into(),
            expected: "square".into(),
            got: format!("{:?}", adjacency.dim()),
        });
    }
    if features.nrows() != n {
        return Err(Error::ShapeMismatch {
            context: "features".into(),
            expected: format!("{} rows", n),
            got: format!("{} rows", features.nrows()),
        });
    }
    if node >= n {
        return Err(Error::NodeOutOfRange { id: node, num_nodes: n });
    }
    Ok(())
}

fn stable_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

// ---------------------------------------------------------------------
// GCN
// ---------------------------------------------------------------------

/// Graph convolutional classifier with a concatenated readout.
///
/// Each convolution computes H_l = relu(Â H_{l-1} W_l + b_l) on the
/// symmetrically renormalized adjacency, and a linear head reads class
/// logits from [H_1 | ... | H_L]. Concatenating every depth matters on
/// the benchmark graphs, whose features are constant: shallow layers
/// carry the local degree signal that a plain stack washes out, and
/// without the biases every relu would reduce to a positive rescaling
/// of the same rank-one activation pattern, leaving the argmax
/// identical across nodes.
#[derive(Debug, Clone)]
pub struct GcnModel {
    convs: Vec<Array2<f64>>,
    conv_biases: Vec<Array2<f64>>,
    readout: Array2<f64>,
    readout_bias: Array2<f64>,
}

impl GcnModel {
    /// Builds a model from bare matrices, all but the last treated as
    /// convolution weights and the last as the readout; biases are
    /// zero. The readout must accept the concatenated convolution
    /// outputs.
    pub fn from_layers(mut layers: Vec<Array2<f64>>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidConfig(
                "GCN needs at least one convolution and a readout".into(),
            ));
        }
        let readout = layers.pop().unwrap();
        let conv_biases = layers.iter().map(|w| Array2::zeros((1, w.ncols()))).collect();
        let readout_bias = Array2::zeros((1, readout.ncols()));
        GcnModel::from_parts(layers, conv_biases, readout, readout_bias)
    }

    /// Builds a model from convolution weights, one (1, out_dim) bias
    /// row per convolution, and the readout pair.
    pub fn from_parts(
        convs: Vec<Array2<f64>>,
        conv_biases: Vec<Array2<f64>>,
        readout: Array2<f64>,
        readout_bias: Array2<f64>,
    ) -> Result<Self> {
        if convs.is_empty() {
            return Err(Error::InvalidConfig(
                "GCN needs at least one convolution".into(),
            ));
        }
        for w in convs
            .iter()
            .chain(&conv_biases)
            .chain([&readout, &readout_bias])
        {
            if !w.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("GCN weights".into()));
            }
        }
        for pair in convs.windows(2) {
            if pair[0].ncols() != pair[1].nrows() {
                return Err(Error::ShapeMismatch {
                    context: "GCN layer chain".into(),
                    expected: format!("{} rows", pair[0].ncols()),
                    got: format!("{} rows", pair[1].nrows()),
                });
            }
        }
        if conv_biases.len() != convs.len() {
            return Err(Error::ShapeMismatch {
                context: "GCN biases".into(),
                expected: format!("{} rows", convs.len()),
                got: format!("{} rows", conv_biases.len()),
            });
        }
        for (w, b) in convs.iter().zip(&conv_biases) {
            if b.nrows() != 1 || b.ncols() != w.ncols() {
                return Err(Error::ShapeMismatch {
                    context: "GCN bias".into(),
                    expected: format!("1 x {}", w.ncols()),
                    got: format!("{} x {}", b.nrows(), b.ncols()),
                });
            }
        }
        let cat_dim: usize = convs.iter().map(|w| w.ncols()).sum();
        if readout.nrows() != cat_dim {
            return Err(Error::ShapeMismatch {
                context: "GCN readout".into(),
                expected: format!("{} rows", cat_dim),
                got: format!("{} rows", readout.nrows()),
            });
        }
        if readout_bias.nrows() != 1 || readout_bias.ncols() != readout.ncols() {
            return Err(Error::ShapeMismatch {
                context: "GCN readout bias".into(),
                expected: format!("1 x {}", readout.ncols()),
                got: format!("{} x {}", readout_bias.nrows(), readout_bias.ncols()),
            });
        }
        Ok(GcnModel {
            convs,
            conv_biases,
            readout,
            readout_bias,
        })
    }

    pub fn convs(&self) -> &[Array2<f64>] {
        &self.convs
    }

    pub fn conv_biases(&self) -> &[Array2<f64>] {
        &self.conv_biases
    }

    pub fn readout(&self) -> &Array2<f64> {
        &self.readout
    }

    pub fn readout_bias(&self) -> &Array2<f64> {
        &self.readout_bias
    }

    pub fn feature_dim(&self) -> usize {
        self.convs[0].nrows()
    }

    /// Records the forward pass on a tape and returns the logits node.
    ///
    /// `a_norm` must already be the renormalized adjacency. Shared by
    /// training, prediction, and adjacency gradients so the three can
    /// never drift apart.
    #[allow(clippy::too_many_arguments)]
    fn forward(
        &self,
        tape: &mut Tape,
        a_norm: NodeId,
        features: NodeId,
        convs: &[NodeId],
        conv_biases: &[NodeId],
        readout: NodeId,
        readout_bias: NodeId,
        ones_col: NodeId,
    ) -> Result<NodeId> {
        let mut h = features;
        let mut depths = Vec::with_capacity(convs.len());
        for (&w, &b) in convs.iter().zip(conv_biases) {
            let prop = tape.matmul(a_norm, h)?;
            let lin = tape.matmul(prop, w)?;
            let bias = tape.matmul(ones_col, b)?;
            let pre = tape.add(lin, bias)?;
            h = tape.relu(pre);
            depths.push(h);
        }
        let cat = tape.concat_cols(&depths)?;
        let lin = tape.matmul(cat, readout)?;
        let bias = tape.matmul(ones_col, readout_bias)?;
        tape.add(lin, bias)
    }

    /// Pushes every parameter onto the tape and runs `forward`.
    fn forward_matrices(
        &self,
        tape: &mut Tape,
        a_norm: NodeId,
        features: NodeId,
        num_nodes: usize,
    ) -> Result<NodeId> {
        let ws: Vec<NodeId> = self.convs.iter().map(|w| tape.input(w.clone())).collect();
        let bs: Vec<NodeId> = self.conv_biases.iter().map(|b| tape.input(b.clone())).collect();
        let readout = tape.input(self.readout.clone());
        let readout_bias = tape.input(self.readout_bias.clone());
        let ones_col = tape.input(Array2::ones((num_nodes, 1)));
        self.forward(tape, a_norm, features, &ws, &bs, readout, readout_bias, ones_col)
    }

    /// Logits for every node, via a throwaway tape.
    fn logits(&self, adjacency: &Array2<f64>, features: &Array2<f64>) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let a = tape.input(adjacency.clone());
        let a_norm = tape.normalize_adjacency(a)?;
        let x = tape.input(features.clone());
        let logits = self.forward_matrices(&mut tape, a_norm, x, features.nrows())?;
        Ok(tape.value(logits).clone())
    }
}

impl BlackBoxModel for GcnModel {
    fn predict(
        &self,
        adjacency: &Array2<f64>,
        features: &Array2<f64>,
        node: usize,
    ) -> Result<ClassDistribution> {
        check_inputs(adjacency, features, node)?;
        if features.ncols() != self.feature_dim() {
            return Err(Error::ShapeMismatch {
                context: "GCN features".into(),
                expected: format!("{} columns", self.feature_dim()),
                got: format!("{} columns", features.ncols()),
            });
        }
        let logits = self.logits(adjacency, features)?;
        let row: Vec<f64> = logits.row(node).to_vec();
        ClassDistribution::new(stable_softmax(&row))
    }

    fn num_classes(&self) -> usize {
        self.readout.ncols()
    }

    fn differentiable(&self) -> bool {
        true
    }

    fn grad_adjacency(
        &self,
        adjacency: &Array2<f64>,
        features: &Array2<f64>,
        node: usize,
        class: usize,
    ) -> Result<Array2<f64>> {
        check_inputs(adjacency, features, node)?;
        if class >= self.num_classes() {
            return Err(Error::InvalidConfig(format!(
                "class {} out of range ({} classes)",
                class,
                self.num_classes()
            )));
        }
        let mut tape = Tape::new();
        let a = tape.input(adjacency.clone());
        let a_norm = tape.normalize_adjacency(a)?;
        let x = tape.input(features.clone());
        let logits = self.forward_matrices(&mut tape, a_norm, x, features.nrows())?;
        let row = tape.row_select(logits, node)?;
        let target = tape.input(Array2::from_shape_fn((1, self.num_classes()), |(_, c)| {
            if c == class {
                1.0
            } else {
                0.0
            }
        }));
        let weight = tape.input(Array2::ones((1, 1)));
        let loss = tape.softmax_cross_entropy(row, target, weight)?;
        tape.backward(loss)?;
        let raw = tape.adjoint(a);
        // Tie the two directed entries of each undirected edge together.
        Ok(raw + &raw.t())
    }
}

/// GCN training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnHyper {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub init_scale: f64,
    /// Independent reinitializations; the run with the lowest loss
    /// wins. Constant-feature graphs leave the loss surface littered
    /// with dead-relu plateaus, so single runs are luck-sensitive.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for GcnHyper {
    fn default() -> Self {
        GcnHyper {
            hidden_dim: 20,
            epochs: 1000,
            learning_rate: 0.01,
            init_scale: 0.1,
            restarts: 1,
            seed: 0,
        }
    }
}

/// Training summary returned alongside the model.
#[derive(Debug, Clone, Copy)]
pub struct GcnTrainReport {
    pub train_accuracy: f64,
    pub final_loss: f64,
}

/// Trains the 3-layer GCN by full-batch softmax cross-entropy over the
/// nodes selected by `train_mask`.
pub fn train_gcn(
    graph: &Graph,
    train_mask: &[bool],
    hyper: &GcnHyper,
) -> Result<(GcnModel, GcnTrainReport)> {
    let n = graph.num_nodes();
    if train_mask.len() != n {
        return Err(Error::ShapeMismatch {
            context: "train mask".into(),
            expected: format!("{} entries", n),
            got: format!("{} entries", train_mask.len()),
        });
    }
    let labels = graph
        .labels()
        .ok_or_else(|| Error::NoLabeledNodes("graph has no labels".into()))?;
    if !train_mask.iter().any(|&m| m) {
        return Err(Error::NoLabeledNodes("train mask selects no nodes".into()));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    if num_classes < 2 {
        return Err(Error::NoLabeledNodes(
            "training needs at least two classes".into(),
        ));
    }

    let feature_dim = graph.feature_dim();
    let dims = [
        (feature_dim, hyper.hidden_dim),
        (hyper.hidden_dim, hyper.hidden_dim),
        (hyper.hidden_dim, hyper.hidden_dim),
    ];

    // Constant across epochs: renormalized adjacency, features, one-hot
    // targets, 0/1 row weights.
    let a_norm = crate::graph::normalize_adjacency(&graph.to_dense());
    let features = graph.features().clone();
    let mut targets = Array2::zeros((n, num_classes));
    let mut weights_col = Array2::zeros((n, 1));
    for v in 0..n {
        targets[[v, labels[v]]] = 1.0;
        if train_mask[v] {
            weights_col[[v, 0]] = 1.0;
        }
    }

    let template = GcnModel {
        convs: Vec::new(),
        conv_biases: Vec::new(),
        readout: Array2::zeros((0, 0)),
        readout_bias: Array2::zeros((0, 0)),
    };

    // Track the lowest loss seen by any epoch of any restart: late
    // full-batch Adam epochs can wander off a good solution, so the
    // shipped weights are the best snapshot, not the last iterate.
    let mut best_loss = f64::INFINITY;
    let mut best_params: Option<Vec<Array2<f64>>> = None;
    for restart in 0..hyper.restarts.max(1) {
        let mut rng = stream_rng(hyper.seed, restart as u64);
        let mut init = |r: usize, c: usize| {
            Param::new(Array2::from_shape_fn((r, c), |_| {
                rng.gen_range(-hyper.init_scale..hyper.init_scale)
            }))
        };
        // Convolution weights, then their zero-initialized bias rows,
        // then the readout pair over the concatenated depths.
        let mut params: Vec<Param> = Vec::with_capacity(2 * dims.len() + 2);
        for &(r, c) in &dims {
            params.push(init(r, c)?);
        }
        for &(_, c) in &dims {
            params.push(Param::new(Array2::zeros((1, c)))?);
        }
        params.push(init(3 * hyper.hidden_dim, num_classes)?);
        params.push(Param::new(Array2::zeros((1, num_classes)))?);

        if best_params.is_none() {
            best_params = Some(params.iter().map(|p| p.value.clone()).collect());
        }

        let mut optimizer = Optimizer::adam(hyper.learning_rate);
        for _ in 0..hyper.epochs {
            let mut tape = Tape::new();
            let a = tape.input(a_norm.clone());
            let x = tape.input(features.clone());
            let nodes: Vec<NodeId> = params.iter().map(|p| p.push(&mut tape)).collect();
            let ones_col = tape.input(Array2::ones((n, 1)));
            let logits = template.forward(
                &mut tape,
                a,
                x,
                &nodes[..dims.len()],
                &nodes[dims.len()..2 * dims.len()],
                nodes[2 * dims.len()],
                nodes[2 * dims.len() + 1],
                ones_col,
            )?;
            let t = tape.input(targets.clone());
            let w = tape.input(weights_col.clone());
            let loss = tape.softmax_cross_entropy(logits, t, w)?;
            let loss_value = tape.scalar(loss);
            if !loss_value.is_finite() {
                return Err(Error::NonFinite("GCN training loss".into()));
            }
            if loss_value < best_loss {
                best_loss = loss_value;
                best_params = Some(params.iter().map(|p| p.value.clone()).collect());
            }
            tape.backward(loss)?;
            let grads: Vec<Array2<f64>> = nodes.iter().map(|&w| tape.adjoint(w).clone()).collect();
            let mut refs: Vec<&mut Param> = params.iter_mut().collect();
            optimizer.step(&mut refs, &grads)?;
        }
    }

    let mut values = best_params.unwrap().into_iter();
    let conv_values: Vec<Array2<f64>> = values.by_ref().take(dims.len()).collect();
    let bias_values: Vec<Array2<f64>> = values.by_ref().take(dims.len()).collect();
    let readout = values.next().unwrap();
    let readout_bias = values.next().unwrap();
    let model = GcnModel::from_parts(conv_values, bias_values, readout, readout_bias)?;
    let final_loss = if best_loss.is_finite() { best_loss } else { 0.0 };
    let logits = model.logits(&graph.to_dense(), graph.features())?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for v in 0..n {
        if !train_mask[v] {
            continue;
        }
        total += 1;
        let row: Vec<f64> = logits.row(v).to_vec();
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(c, _)| c)
            .unwrap();
        if pred == labels[v] {
            correct += 1;
        }
    }
    Ok((
        model,
        GcnTrainReport {
            train_accuracy: correct as f64 / total as f64,
            final_loss,
        },
    ))
}

// ---------------------------------------------------------------------
// Rule-based model
// ---------------------------------------------------------------------

/// Weighted walk-evidence classifier standing in for a collective
/// relational model.
///
/// Seed nodes carry observed classes, encoded as one-hot rows of the
/// feature matrix (zero rows for unobserved nodes). The score of class c
/// at node v is sum_k lambda_k * (A^k X)[v, c]: evidence from walks of
/// length k = 1..rule_weights.len() to observed class-c nodes, each walk
/// weighted by the product of its edge values. Scores are smoothed and
/// proportionally normalized. The model is deliberately opaque to
/// gradient methods: `differentiable` is false.
#[derive(Debug, Clone)]
pub struct RuleModel {
    pub rule_weights: Vec<f64>,
    /// Observed node -> class, on the training graph's node ids.
    pub seeds: BTreeMap<usize, usize>,
    pub num_classes: usize,
    pub smoothing: f64,
}

impl RuleModel {
    /// Selects a deterministic random fraction of nodes as observed
    /// seeds and records their labels.
    pub fn fit(
        graph: &Graph,
        seed_fraction: f64,
        rule_weights: Vec<f64>,
        smoothing: f64,
        seed: u64,
    ) -> Result<RuleModel> {
        if !(0.0..=1.0).contains(&seed_fraction) {
            return Err(Error::InvalidConfig(format!(
                "seed fraction {} outside [0, 1]",
                seed_fraction
            )));
        }
        if rule_weights.is_empty() || rule_weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidConfig(
                "rule weights must be nonempty and nonnegative".into(),
            ));
        }
        if smoothing <= 0.0 {
            return Err(Error::InvalidConfig("smoothing must be positive".into()));
        }
        let labels = graph
            .labels()
            .ok_or_else(|| Error::NoLabeledNodes("rule model needs labels".into()))?;
        let n = graph.num_nodes();
        let count = ((n as f64) * seed_fraction).floor() as usize;
        if count == 0 {
            return Err(Error::NoLabeledNodes(
                "seed fraction selects no observed nodes".into(),
            ));
        }
        let mut rng = stream_rng(seed, 0);
        let mut chosen: Vec<usize> = sample_indices(&mut rng, n, count).into_vec();
        chosen.sort_unstable();
        let seeds: BTreeMap<usize, usize> = chosen.into_iter().map(|v| (v, labels[v])).collect();
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(RuleModel {
            rule_weights,
            seeds,
            num_classes,
            smoothing,
        })
    }

    /// One-hot observation features aligned with this model: row v is
    /// the one-hot class of v if observed, else all zeros.
    ///
    /// Queries must use these (or ego-restricted copies of them) as the
    /// feature matrix, which keeps `predict` a pure function of its
    /// arguments — perturbed adjacencies just work.
    pub fn seed_features(&self, num_nodes: usize) -> Array2<f64> {
        let mut x = Array2::zeros((num_nodes, self.num_classes));
        for (&v, &c) in &self.seeds {
            if v < num_nodes {
                x[[v, c]] = 1.0;
            }
        }
        x
    }

    /// Unnormalized walk evidence per class at `node`.
    pub fn class_evidence(
        &self,
        adjacency: &Array2<f64>,
        features: &Array2<f64>,
        node: usize,
    ) -> Result<Vec<f64>> {
        check_inputs(adjacency, features, node)?;
        if features.ncols() != self.num_classes {
            return Err(Error::ShapeMismatch {
                context: "rule model features".into(),
                expected: format!("{} columns", self.num_classes),
                got: format!("{} columns", features.ncols()),
            });
        }
        // Row-vector powers: r_k = e_v A^k, so evidence_k = r_k X.
        let mut evidence = vec![0.0; self.num_classes];
        let mut reach: Array1<f64> = adjacency.row(node).to_owned();
        for (k, &lambda) in self.rule_weights.iter().enumerate() {
            if k > 0 {
                reach = reach.dot(adjacency);
            }
            let contrib = reach.dot(features);
            for c in 0..self.num_classes {
                evidence[c] += lambda * contrib[c];
            }
        }
        Ok(evidence)
    }
}

impl BlackBoxModel for RuleModel {
    fn predict(
        &self,
        adjacency: &Array2<f64>,
        features: &Array2<f64>,
        node: usize,
    ) -> Result<ClassDistribution> {
        let evidence = self.class_evidence(adjacency, features, node)?;
        let smoothed: Vec<f64> = evidence.iter().map(|e| e + self.smoothing).collect();
        let total: f64 = smoothed.iter().sum();
        ClassDistribution::new(smoothed.iter().map(|e| e / total).collect())
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }
}

// ---------------------------------------------------------------------
// Call counting
// ---------------------------------------------------------------------

/// Wrapper that counts black-box queries, for sample budgets and
/// benchmark reporting.
pub struct CountingModel<'a> {
    inner: &'a dyn BlackBoxModel,
    calls: AtomicU64,
}

impl<'a> CountingModel<'a> {
    pub fn new(inner: &'a dyn BlackBoxModel) -> Self {
        CountingModel {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl BlackBoxModel for CountingModel<'_> {
    fn predict(
        &self,
        adjacency: &Array2<f64>,
        features: &Array2<f64>,
        node: usize,
    ) -> Result<ClassDistribution> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict(adjacency, features, node)
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn differentiable(&self) -> bool {
        self.inner.differentiable()
    }

    fn grad_adjacency(
        &self,
        adjacency: &Array2<f64>,
        features: &Array2<f64>,
        node: usize,
        class: usize,
    ) -> Result<Array2<f64>> {
        self.inner.grad_adjacency(adjacency, features, node, class)
    }
}
