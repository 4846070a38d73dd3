//! Minimal reverse-mode differentiation over dense matrix operations.
//!
//! An explicit tape records eagerly-evaluated operations; `backward` fills
//! adjoints by reverse traversal. Tapes are cheap and rebuilt every
//! optimization step, so there is no graph reuse or memory management to
//! speak of. Scalars are 1x1 matrices.

use ndarray::{s, Array2};
use rand::Rng;

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    ConcatCols(Vec<NodeId>),
    RowSelect(NodeId, usize),
    ScatterEdges {
        values: NodeId,
        edges: Vec<(usize, usize)>,
    },
    GumbelSigmoid {
        logits: NodeId,
        temperature: f64,
    },
    NormalizeAdjacency(NodeId),
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: NodeId,
        row_weights: NodeId,
    },
    BinaryCrossEntropy {
        pred: NodeId,
        target: NodeId,
    },
    L1Norm(NodeId),
    L21Norm(NodeId),
    ScalarCombine {
        terms: Vec<NodeId>,
        coeffs: Vec<f64>,
    },
}

struct TapeNode {
    op: Op,
    value: Array2<f64>,
    adjoint: Array2<f64>,
}

/// Append-only record of eagerly-evaluated matrix operations.
///
/// Inputs (constants and parameters alike) enter via [`Tape::input`]; the
/// caller keeps the `NodeId`s of parameters to read their gradients after
/// [`Tape::backward`].
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

const BCE_CLAMP: f64 = 1e-7;

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> NodeId {
        let id = NodeId(self.nodes.len());
        let adjoint = Array2::zeros(value.dim());
        self.nodes.push(TapeNode { op, value, adjoint });
        id
    }

    fn val(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        self.val(id)
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[[0, 0]]
    }

    /// Adjoint (gradient) of a node, valid after [`Tape::backward`].
    pub fn adjoint(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].adjoint
    }

    /// Records a leaf holding `value`.
    pub fn input(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.val(a).dim();
        let (br, bc) = self.val(b).dim();
        if ac != br {
            return Err(shape_err("matmul", "k x k", &format!("{}x{} . {}x{}", ar, ac, br, bc)));
        }
        let value = self.val(a).dot(self.val(b));
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.val(a).dim() != self.val(b).dim() {
            return Err(shape_err(
                "add",
                &format!("{:?}", self.val(a).dim()),
                &format!("{:?}", self.val(b).dim()),
            ));
        }
        let value = self.val(a) + self.val(b);
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.val(a).dim() != self.val(b).dim() {
            return Err(shape_err(
                "hadamard",
                &format!("{:?}", self.val(a).dim()),
                &format!("{:?}", self.val(b).dim()),
            ));
        }
        let value = self.val(a) * self.val(b);
        Ok(self.push(Op::Hadamard(a, b), value))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.val(a).mapv(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.val(a).mapv(|x| x.max(0.0));
        self.push(Op::Relu(a), value)
    }

    /// Column-concatenates inputs that share a row count.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::InvalidConfig("concat_cols of zero inputs".into()));
        }
        let rows = self.val(parts[0]).nrows();
        let mut cols = 0;
        for &p in parts {
            if self.val(p).nrows() != rows {
                return Err(shape_err(
                    "concat_cols",
                    &format!("{} rows", rows),
                    &format!("{} rows", self.val(p).nrows()),
                ));
            }
            cols += self.val(p).ncols();
        }
        let mut value = Array2::zeros((rows, cols));
        let mut at = 0;
        for &p in parts {
            let w = self.val(p).ncols();
            value.slice_mut(s![.., at..at + w]).assign(self.val(p));
            at += w;
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value))
    }

    /// Selects one row as a 1 x cols matrix.
    pub fn row_select(&mut self, a: NodeId, row: usize) -> Result<NodeId> {
        if row >= self.val(a).nrows() {
            return Err(shape_err(
                "row_select",
                &format!("row < {}", self.val(a).nrows()),
                &format!("row {}", row),
            ));
        }
        let value = self
            .val(a)
            .row(row)
            .insert_axis(ndarray::Axis(0))
            .to_owned();
        Ok(self.push(Op::RowSelect(a, row), value))
    }

    /// Scatters one value per unordered edge into a symmetric size x size
    /// matrix (zero elsewhere). `values` must be an E x 1 column.
    pub fn scatter_edges(
        &mut self,
        values: NodeId,
        edges: &[(usize, usize)],
        size: usize,
    ) -> Result<NodeId> {
        let dim = self.val(values).dim();
        if dim != (edges.len(), 1) {
            return Err(shape_err(
                "scatter_edges",
                &format!("{}x1", edges.len()),
                &format!("{:?}", dim),
            ));
        }
        let mut value = Array2::zeros((size, size));
        for (i, &(p, q)) in edges.iter().enumerate() {
            if p >= size || q >= size || p == q {
                return Err(Error::InvalidConfig(format!(
                    "scatter_edges: bad edge ({}, {}) for size {}",
                    p, q, size
                )));
            }
            let v = self.val(values)[[i, 0]];
            value[[p, q]] = v;
            value[[q, p]] = v;
        }
        Ok(self.push(
            Op::ScatterEdges {
                values,
                edges: edges.to_vec(),
            },
            value,
        ))
    }

    /// Two-category concrete relaxation per entry: for logit w and noise
    /// g = g1 - g2 (difference of two standard Gumbel draws), the value is
    /// sigmoid((w + g) / temperature). Gradients flow through the
    /// relaxation; the noise input is a constant.
    pub fn gumbel_softmax_pair(
        &mut self,
        logits: NodeId,
        noise: NodeId,
        temperature: f64,
    ) -> Result<NodeId> {
        if self.val(logits).dim() != self.val(noise).dim() {
            return Err(shape_err(
                "gumbel_softmax_pair",
                &format!("{:?}", self.val(logits).dim()),
                &format!("{:?}", self.val(noise).dim()),
            ));
        }
        if temperature <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gumbel temperature {} must be positive",
                temperature
            )));
        }
        let value = ndarray::Zip::from(self.val(logits))
            .and(self.val(noise))
            .map_collect(|&w, &g| sigmoid((w + g) / temperature));
        Ok(self.push(Op::GumbelSigmoid { logits, temperature }, value))
    }

    /// Symmetric renormalization D^(-1/2) (A + I) D^(-1/2), differentiable
    /// in A. Entries of A must be nonnegative.
    pub fn normalize_adjacency(&mut self, a: NodeId) -> Result<NodeId> {
        let m = self.val(a);
        if m.nrows() != m.ncols() {
            return Err(shape_err(
                "normalize_adjacency",
                "square",
                &format!("{:?}", m.dim()),
            ));
        }
        let value = crate::graph::normalize_adjacency(m);
        Ok(self.push(Op::NormalizeAdjacency(a), value))
    }

    /// Weighted mean over rows of the softmax cross-entropy between logits
    /// and (soft or one-hot) target rows. `row_weights` is a constant
    /// n x 1 column; rows with zero weight do not contribute.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        targets: NodeId,
        row_weights: NodeId,
    ) -> Result<NodeId> {
        let dim = self.val(logits).dim();
        if self.val(targets).dim() != dim {
            return Err(shape_err(
                "softmax_cross_entropy targets",
                &format!("{:?}", dim),
                &format!("{:?}", self.val(targets).dim()),
            ));
        }
        if self.val(row_weights).dim() != (dim.0, 1) {
            return Err(shape_err(
                "softmax_cross_entropy row_weights",
                &format!("{}x1", dim.0),
                &format!("{:?}", self.val(row_weights).dim()),
            ));
        }
        let total_weight: f64 = self.val(row_weights).sum();
        if total_weight <= 0.0 {
            return Err(Error::InvalidConfig(
                "softmax_cross_entropy: row weights sum to zero".into(),
            ));
        }
        let mut acc = 0.0;
        for r in 0..dim.0 {
            let w = self.val(row_weights)[[r, 0]];
            if w == 0.0 {
                continue;
            }
            let row = self.val(logits).row(r);
            let t = self.val(targets).row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
            let ce: f64 = t
                .iter()
                .zip(row.iter())
                .map(|(&tj, &zj)| tj * (lse - zj))
                .sum();
            acc += w * ce;
        }
        let value = Array2::from_elem((1, 1), acc / total_weight);
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                row_weights,
            },
            value,
        ))
    }

    /// Elementwise binary cross-entropy of `pred` against a constant
    /// `target`, summed over all positions. Predictions are clamped away
    /// from {0, 1} before taking logs.
    pub fn binary_cross_entropy(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        if self.val(pred).dim() != self.val(target).dim() {
            return Err(shape_err(
                "binary_cross_entropy",
                &format!("{:?}", self.val(pred).dim()),
                &format!("{:?}", self.val(target).dim()),
            ));
        }
        let mut acc = 0.0;
        for (&p, &t) in self.val(pred).iter().zip(self.val(target).iter()) {
            let pc = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            acc -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        }
        let value = Array2::from_elem((1, 1), acc);
        Ok(self.push(Op::BinaryCrossEntropy { pred, target }, value))
    }

    /// Sum of absolute values.
    pub fn l1_norm(&mut self, a: NodeId) -> NodeId {
        let value = Array2::from_elem((1, 1), self.val(a).iter().map(|v| v.abs()).sum());
        self.push(Op::L1Norm(a), value)
    }

    /// Sum over rows of the row-wise Euclidean norm (group sparsity with
    /// each row as one group).
    pub fn l21_norm(&mut self, a: NodeId) -> NodeId {
        let mut acc = 0.0;
        for r in 0..self.val(a).nrows() {
            acc += self.val(a).row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        let value = Array2::from_elem((1, 1), acc);
        self.push(Op::L21Norm(a), value)
    }

    /// Weighted sum of scalar (1x1) nodes.
    pub fn scalar_combine(&mut self, terms: &[NodeId], coeffs: &[f64]) -> Result<NodeId> {
        if terms.len() != coeffs.len() || terms.is_empty() {
            return Err(Error::InvalidConfig(
                "scalar_combine: terms and coeffs must be nonempty and equal length".into(),
            ));
        }
        let mut acc = 0.0;
        for (&t, &c) in terms.iter().zip(coeffs) {
            if self.val(t).dim() != (1, 1) {
                return Err(shape_err(
                    "scalar_combine",
                    "1x1",
                    &format!("{:?}", self.val(t).dim()),
                ));
            }
            acc += c * self.val(t)[[0, 0]];
        }
        let value = Array2::from_elem((1, 1), acc);
        Ok(self.push(
            Op::ScalarCombine {
                terms: terms.to_vec(),
                coeffs: coeffs.to_vec(),
            },
            value,
        ))
    }

    /// Populates adjoints of every node reachable from the 1x1 seed;
    /// unreachable nodes keep zero adjoints.
    pub fn backward(&mut self, seed: NodeId) -> Result<()> {
        if self.nodes[seed.0].value.dim() != (1, 1) {
            return Err(shape_err(
                "backward seed",
                "1x1 scalar",
                &format!("{:?}", self.nodes[seed.0].value.dim()),
            ));
        }
        for n in &mut self.nodes {
            n.adjoint.fill(0.0);
        }
        self.nodes[seed.0].adjoint[[0, 0]] = 1.0;

        for i in (0..=seed.0).rev() {
            // Detach the op and adjoint to appease the borrow checker; values
            // of other nodes are read-only during propagation.
            let op = self.nodes[i].op.clone();
            let adj = self.nodes[i].adjoint.clone();
            match op {
                Op::Input => {}
                Op::MatMul(a, b) => {
                    let ga = adj.dot(&self.nodes[b.0].value.t());
                    let gb = self.nodes[a.0].value.t().dot(&adj);
                    self.nodes[a.0].adjoint += &ga;
                    self.nodes[b.0].adjoint += &gb;
                }
                Op::Add(a, b) => {
                    self.nodes[a.0].adjoint += &adj;
                    self.nodes[b.0].adjoint += &adj;
                }
                Op::Hadamard(a, b) => {
                    let ga = &adj * &self.nodes[b.0].value;
                    let gb = &adj * &self.nodes[a.0].value;
                    self.nodes[a.0].adjoint += &ga;
                    self.nodes[b.0].adjoint += &gb;
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let g = ndarray::Zip::from(&adj)
                        .and(y)
                        .map_collect(|&g, &y| g * y * (1.0 - y));
                    self.nodes[a.0].adjoint += &g;
                }
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    let g = ndarray::Zip::from(&adj)
                        .and(x)
                        .map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 });
                    self.nodes[a.0].adjoint += &g;
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.ncols();
                        let slice = adj.slice(s![.., at..at + w]).to_owned();
                        self.nodes[p.0].adjoint += &slice;
                        at += w;
                    }
                }
                Op::RowSelect(a, row) => {
                    let mut g = self.nodes[a.0].adjoint.row_mut(row);
                    g += &adj.row(0);
                }
                Op::ScatterEdges { values, edges } => {
                    for (e, &(p, q)) in edges.iter().enumerate() {
                        self.nodes[values.0].adjoint[[e, 0]] += adj[[p, q]] + adj[[q, p]];
                    }
                }
                Op::GumbelSigmoid { logits, temperature } => {
                    let y = &self.nodes[i].value;
                    let g = ndarray::Zip::from(&adj)
                        .and(y)
                        .map_collect(|&g, &y| g * y * (1.0 - y) / temperature);
                    self.nodes[logits.0].adjoint += &g;
                }
                Op::NormalizeAdjacency(a) => {
                    let g = normalize_adjacency_backward(
                        &adj,
                        &self.nodes[a.0].value,
                        &self.nodes[i].value,
                    );
                    self.nodes[a.0].adjoint += &g;
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    row_weights,
                } => {
                    let go = adj[[0, 0]];
                    let total_weight: f64 = self.nodes[row_weights.0].value.sum();
                    let (rows, cols) = self.nodes[logits.0].value.dim();
                    let mut g = Array2::zeros((rows, cols));
                    for r in 0..rows {
                        let w = self.nodes[row_weights.0].value[[r, 0]];
                        if w == 0.0 {
                            continue;
                        }
                        let row = self.nodes[logits.0].value.row(r);
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
                        let z: f64 = exps.iter().sum();
                        let tsum: f64 = self.nodes[targets.0].value.row(r).sum();
                        for c in 0..cols {
                            let soft = exps[c] / z;
                            let t = self.nodes[targets.0].value[[r, c]];
                            g[[r, c]] = go * w / total_weight * (tsum * soft - t);
                        }
                    }
                    self.nodes[logits.0].adjoint += &g;
                }
                Op::BinaryCrossEntropy { pred, target } => {
                    let go = adj[[0, 0]];
                    let g = ndarray::Zip::from(&self.nodes[pred.0].value)
                        .and(&self.nodes[target.0].value)
                        .map_collect(|&p, &t| {
                            if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                                0.0
                            } else {
                                go * (-t / p + (1.0 - t) / (1.0 - p))
                            }
                        });
                    self.nodes[pred.0].adjoint += &g;
                }
                Op::L1Norm(a) => {
                    let go = adj[[0, 0]];
                    let g = self.nodes[a.0].value.mapv(|x| go * sign(x));
                    self.nodes[a.0].adjoint += &g;
                }
                Op::L21Norm(a) => {
                    let go = adj[[0, 0]];
                    let x = &self.nodes[a.0].value;
                    let mut g = Array2::zeros(x.dim());
                    for r in 0..x.nrows() {
                        let norm = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm > 0.0 {
                            for c in 0..x.ncols() {
                                g[[r, c]] = go * x[[r, c]] / norm;
                            }
                        }
                    }
                    self.nodes[a.0].adjoint += &g;
                }
                Op::ScalarCombine { terms, coeffs } => {
                    let go = adj[[0, 0]];
                    for (t, c) in terms.iter().zip(coeffs) {
                        self.nodes[t.0].adjoint[[0, 0]] += go * c;
                    }
                }
            }
        }
        Ok(())
    }
}

fn shape_err(context: &str, expected: &str, got: &str) -> Error {
    Error::ShapeMismatch {
        context: context.into(),
        expected: expected.into(),
        got: got.into(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adjoint of Out = D^(-1/2) (A + I) D^(-1/2) with D = diag(rowsum(A) + 1).
///
/// Perturbing A_rs moves the direct entry and, through d_r alone, every
/// entry of row r and column r of Out. With u_p = d_p^(-1/2):
/// dJ/dA_rs = G_rs u_r u_s - (row_dot_r + col_dot_r) / (2 d_r), where
/// row_dot_r = sum_q G_rq Out_rq and col_dot_r = sum_p G_pr Out_pr.
fn normalize_adjacency_backward(
    grad_out: &Array2<f64>,
    a: &Array2<f64>,
    out: &Array2<f64>,
) -> Array2<f64> {
    let n = a.nrows();
    let mut deg = vec![0.0; n];
    let mut inv_sqrt = vec![0.0; n];
    for i in 0..n {
        deg[i] = 1.0 + a.row(i).sum();
        inv_sqrt[i] = 1.0 / deg[i].sqrt();
    }
    // Row and column contractions of G with Out.
    let mut row_dot = vec![0.0; n];
    let mut col_dot = vec![0.0; n];
    for r in 0..n {
        for c in 0..n {
            let gout = grad_out[[r, c]] * out[[r, c]];
            row_dot[r] += gout;
            col_dot[c] += gout;
        }
    }
    let mut g = Array2::zeros((n, n));
    for r in 0..n {
        for c in 0..n {
            g[[r, c]] = grad_out[[r, c]] * inv_sqrt[r] * inv_sqrt[c]
                - 0.5 * (row_dot[r] + col_dot[r]) / deg[r];
        }
    }
    g
}

/// Trainable parameter: a dense matrix kept finite across update steps.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Array2<f64>,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Result<Self> {
        if !value.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("parameter initialization".into()));
        }
        Ok(Param { value })
    }

    /// Leases the current value onto a tape as an input node.
    pub fn push(&self, tape: &mut Tape) -> NodeId {
        tape.input(self.value.clone())
    }
}

/// Gradient-descent update rule: plain descent or the adaptive-moment
/// variant (the default for surrogate training and mask learning).
pub enum Optimizer {
    Sgd {
        learning_rate: f64,
    },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        step: u64,
        first_moment: Vec<Array2<f64>>,
        second_moment: Vec<Array2<f64>>,
    },
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        Optimizer::Sgd { learning_rate }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Optimizer::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// Applies one update. Aborts with a diagnostic on non-finite
    /// gradients rather than clamping them.
    pub fn step(&mut self, params: &mut [&mut Param], grads: &[Array2<f64>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidConfig(
                "optimizer step: params/grads length mismatch".into(),
            ));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.value.dim() != g.dim() {
                return Err(shape_err(
                    "optimizer step",
                    &format!("{:?}", p.value.dim()),
                    &format!("{:?}", g.dim()),
                ));
            }
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("gradient".into()));
            }
        }
        match self {
            Optimizer::Sgd { learning_rate } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.value.scaled_add(-*learning_rate, g);
                }
            }
            Optimizer::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
                step,
                first_moment,
                second_moment,
            } => {
                if first_moment.is_empty() {
                    for g in grads {
                        first_moment.push(Array2::zeros(g.dim()));
                        second_moment.push(Array2::zeros(g.dim()));
                    }
                }
                *step += 1;
                let t = *step as f64;
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let m = &mut first_moment[i];
                    let v = &mut second_moment[i];
                    m.zip_mut_with(g, |m, &g| *m = *beta1 * *m + (1.0 - *beta1) * g);
                    v.zip_mut_with(g, |v, &g| *v = *beta2 * *v + (1.0 - *beta2) * g * g);
                    ndarray::Zip::from(&mut p.value)
                        .and(&*m)
                        .and(&*v)
                        .for_each(|p, &m, &v| {
                            *p -= *learning_rate * (m / bc1) / ((v / bc2).sqrt() + *epsilon);
                        });
                }
            }
        }
        for p in params.iter() {
            if !p.value.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("parameter after update".into()));
            }
        }
        Ok(())
    }
}

/// Difference of two standard Gumbel draws per entry, for
/// [`Tape::gumbel_softmax_pair`].
pub fn gumbel_pair_noise<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        standard_gumbel(rng) - standard_gumbel(rng)
    })
}

fn standard_gumbel<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

/// Central finite-difference gradient of a scalar function, evaluated
/// entry by entry. Independent of the tape; used as the gradient oracle.
pub fn finite_difference_gradient<F>(mut f: F, at: &Array2<f64>, step: f64) -> Array2<f64>
where
    F: FnMut(&Array2<f64>) -> f64,
{
    let mut grad = Array2::zeros(at.dim());
    for r in 0..at.nrows() {
        for c in 0..at.ncols() {
            let mut plus = at.clone();
            plus[[r, c]] += step;
            let mut minus = at.clone();
            minus[[r, c]] -= step;
            grad[[r, c]] = (f(&plus) - f(&minus)) / (2.0 * step);
        }
    }
    grad
}

/// Largest relative elementwise error between an analytic gradient and an
/// oracle, with an absolute floor for near-zero entries.
pub fn max_relative_error(analytic: &Array2<f64>, oracle: &Array2<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (&a, &o) in analytic.iter().zip(oracle.iter()) {
        let denom = a.abs().max(o.abs()).max(1e-6);
        worst = worst.max((a - o).abs() / denom);
    }
    worst
}
