//! Comparison explainers: relational anchors and saliency maps.
//!
//! Relational anchors search for a small edge set whose forced presence
//! keeps the black box confident in its original class, treating
//! candidate anchors as bandit arms. The saliency map reads edge
//! importance straight off the black box's adjacency gradient — which
//! only works when the model exposes one, the boundary that makes the
//! mask-based explainer model-agnostic and this baseline not.

use std::collections::{BTreeSet, VecDeque};

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::blackbox::{BlackBoxModel, CountingModel};
use crate::error::{Error, Result};
use crate::explain::{sample_perturbation, Explanation, ExplanationEdge};
use crate::graph::EgoGraph;

/// Knobs for the anchor search.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorOptions {
    /// Confidence slack: a sample counts as precise when the original
    /// class keeps probability above 1 - delta.
    pub delta: f64,
    /// Search stops at the first anchor whose estimated precision
    /// reaches this.
    pub target_precision: f64,
    /// Total black-box call budget for one explanation.
    pub budget: u64,
    /// BFS sampler keep probability for conditioned samples.
    pub keep_prob: f64,
    /// Beam width of the anchor search.
    pub beam_width: usize,
}

impl Default for AnchorOptions {
    fn default() -> Self {
        AnchorOptions {
            delta: 0.1,
            target_precision: 0.95,
            budget: 5000,
            keep_prob: 0.5,
            beam_width: 2,
        }
    }
}

impl AnchorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta {} outside (0, 1)",
                self.delta
            )));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "keep_prob {} outside (0, 1]",
                self.keep_prob
            )));
        }
        if self.budget == 0 {
            return Err(Error::InvalidConfig("anchor budget must be >= 1".into()));
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam width must be >= 1".into()));
        }
        if !self.target_precision.is_finite() {
            return Err(Error::InvalidConfig("target precision must be finite".into()));
        }
        Ok(())
    }
}

/// Edges that keep an anchor attached to the center: the anchor itself
/// plus, for every anchor endpoint, the edges of its shortest path to
/// the center in the full ego graph (BFS tree, neighbors ascending).
fn anchor_closure(
    ego: &EgoGraph,
    anchor: &BTreeSet<(usize, usize)>,
) -> Result<BTreeSet<(usize, usize)>> {
    let edge_set: BTreeSet<(usize, usize)> = ego.edges().into_iter().collect();
    for &e in anchor {
        if !edge_set.contains(&e) {
            return Err(Error::InvalidConfig(format!(
                "anchor edge ({}, {}) is not an ego edge",
                e.0, e.1
            )));
        }
    }
    let n = ego.num_nodes();
    let a = ego.adjacency();
    let mut parent = vec![usize::MAX; n];
    parent[ego.center()] = ego.center();
    let mut queue = VecDeque::from([ego.center()]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if a[[u, v]] != 0.0 && parent[v] == usize::MAX {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    let mut closure = anchor.clone();
    for &(u, v) in anchor {
        for mut cur in [u, v] {
            while cur != ego.center() {
                let p = parent[cur];
                closure.insert((cur.min(p), cur.max(p)));
                cur = p;
            }
        }
    }
    Ok(closure)
}

/// One BFS perturbation with the closure edges forced back in.
fn sample_conditioned(
    ego: &EgoGraph,
    closure: &BTreeSet<(usize, usize)>,
    keep_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    let mut z = sample_perturbation(ego, keep_prob, rng)?;
    let a = ego.adjacency();
    for &(u, v) in closure {
        z[[u, v]] = a[[u, v]];
        z[[v, u]] = a[[v, u]];
    }
    Ok(z)
}

/// Estimated precision of an anchor: the fraction of `n` conditioned
/// samples on which class `c` keeps probability above `1 - delta`.
///
/// `c` is the black box's argmax class on the unperturbed ego.
pub fn anchor_precision(
    blackbox: &dyn BlackBoxModel,
    ego: &EgoGraph,
    anchor: &BTreeSet<(usize, usize)>,
    delta: f64,
    keep_prob: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidConfig("precision needs n >= 1 samples".into()));
    }
    let closure = anchor_closure(ego, anchor)?;
    let original = blackbox.predict(ego.adjacency(), ego.features(), ego.center())?;
    let c = original.argmax();
    let mut hits = 0usize;
    for _ in 0..n {
        let z = sample_conditioned(ego, &closure, keep_prob, rng)?;
        let d = blackbox.predict(&z, ego.features(), ego.center())?;
        if 1.0 - d.prob(c) < delta {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

/// One candidate anchor with its sampling statistics.
struct Arm {
    edges: BTreeSet<(usize, usize)>,
    closure: BTreeSet<(usize, usize)>,
    hits: u64,
    trials: u64,
}

impl Arm {
    fn mean(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.hits as f64 / self.trials as f64
        }
    }

    /// Hoeffding radius at confidence 95%.
    fn radius(&self) -> f64 {
        if self.trials == 0 {
            f64::INFINITY
        } else {
            (f64::ln(2.0 / 0.05) / (2.0 * self.trials as f64)).sqrt()
        }
    }

    fn lcb(&self) -> f64 {
        self.mean() - self.radius()
    }

    fn ucb(&self) -> f64 {
        self.mean() + self.radius()
    }
}

/// Samples per arm per elimination round.
const ARM_BATCH: usize = 10;
/// Trials before an arm's estimate may satisfy the stopping target.
const MIN_EVAL_TRIALS: u64 = 20;
/// Per-arm sampling cap when elimination stalls.
const ARM_TRIAL_CAP: u64 = 200;

/// Beam-searched anchor explanation.
///
/// Starting from the empty anchor, each round extends every beam anchor
/// by one edge and plays the candidates as bandit arms: sample in
/// batches, eliminate arms whose upper confidence bound falls below the
/// best lower bound, stop at `beam_width` survivors or a stalled round.
/// The search returns the smallest anchor whose estimate reaches the
/// target, or the best anchor found when the budget runs out.
pub fn relational_anchors(
    blackbox: &dyn BlackBoxModel,
    ego: &EgoGraph,
    opts: &AnchorOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Explanation> {
    opts.validate()?;
    let edges = ego.edges();
    let counting = CountingModel::new(blackbox);

    if opts.target_precision <= 0.0 || edges.is_empty() {
        // A vacuous target is met by the empty anchor without sampling.
        return Ok(anchor_explanation(ego, &BTreeSet::new(), Vec::new(), 0));
    }

    let original = counting.predict(ego.adjacency(), ego.features(), ego.center())?;
    let c = original.argmax();
    let mut trace = Vec::new();

    let draw = |arm: &mut Arm, rng: &mut ChaCha8Rng| -> Result<bool> {
        if counting.calls() >= opts.budget {
            return Ok(false);
        }
        let z = sample_conditioned(ego, &arm.closure, opts.keep_prob, rng)?;
        let d = counting.predict(&z, ego.features(), ego.center())?;
        arm.trials += 1;
        if 1.0 - d.prob(c) < opts.delta {
            arm.hits += 1;
        }
        Ok(true)
    };

    // Round 0: the empty anchor on its own.
    let mut empty_arm = Arm {
        edges: BTreeSet::new(),
        closure: BTreeSet::new(),
        hits: 0,
        trials: 0,
    };
    for _ in 0..MIN_EVAL_TRIALS.max(ARM_BATCH as u64) {
        if !draw(&mut empty_arm, rng)? {
            break;
        }
    }
    trace.push(empty_arm.mean());
    if empty_arm.trials >= MIN_EVAL_TRIALS && empty_arm.mean() >= opts.target_precision {
        return Ok(anchor_explanation(ego, &empty_arm.edges, trace, counting.calls()));
    }
    let mut best = (empty_arm.mean(), empty_arm.edges.clone());
    let mut beam: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new()];

    while counting.calls() < opts.budget {
        // Candidate children: each beam anchor extended by one edge.
        let children: BTreeSet<BTreeSet<(usize, usize)>> = beam
            .iter()
            .flat_map(|anchor| {
                edges.iter().filter(|e| !anchor.contains(e)).map(|&e| {
                    let mut child = anchor.clone();
                    child.insert(e);
                    child
                })
            })
            .collect();
        if children.is_empty() {
            break;
        }
        let mut arms: Vec<Arm> = children
            .into_iter()
            .map(|edges| {
                let closure = anchor_closure(ego, &edges)?;
                Ok(Arm {
                    edges,
                    closure,
                    hits: 0,
                    trials: 0,
                })
            })
            .collect::<Result<_>>()?;

        // Confidence-bound elimination down to the beam width.
        let mut active: Vec<usize> = (0..arms.len()).collect();
        loop {
            let mut progressed = false;
            for &i in &active {
                for _ in 0..ARM_BATCH {
                    if draw(&mut arms[i], rng)? {
                        progressed = true;
                    } else {
                        break;
                    }
                }
            }
            if !progressed {
                break;
            }
            let best_lcb = active
                .iter()
                .map(|&i| arms[i].lcb())
                .fold(f64::NEG_INFINITY, f64::max);
            active.retain(|&i| arms[i].ucb() >= best_lcb);
            if active.len() <= opts.beam_width
                || active.iter().all(|&i| arms[i].trials >= ARM_TRIAL_CAP)
            {
                break;
            }
        }

        // Rank the round's arms: estimate first, then smaller and
        // lexicographically earlier anchors.
        let mut order: Vec<usize> = (0..arms.len()).collect();
        order.sort_by(|&i, &j| {
            arms[j]
                .mean()
                .partial_cmp(&arms[i].mean())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| arms[i].edges.len().cmp(&arms[j].edges.len()))
                .then_with(|| arms[i].edges.cmp(&arms[j].edges))
        });
        trace.push(arms[order[0]].mean());

        // Anchors grow one edge per round, so the first round with a
        // winner yields the smallest anchor meeting the target.
        if let Some(&w) = order.iter().find(|&&i| {
            arms[i].trials >= MIN_EVAL_TRIALS && arms[i].mean() >= opts.target_precision
        }) {
            return Ok(anchor_explanation(ego, &arms[w].edges, trace, counting.calls()));
        }
        if arms[order[0]].mean() > best.0 {
            best = (arms[order[0]].mean(), arms[order[0]].edges.clone());
        }
        beam = order
            .iter()
            .take(opts.beam_width)
            .map(|&i| arms[i].edges.clone())
            .collect();
    }
    Ok(anchor_explanation(ego, &best.1, trace, counting.calls()))
}

/// Binary explanation from a local anchor edge set.
fn anchor_explanation(
    ego: &EgoGraph,
    anchor: &BTreeSet<(usize, usize)>,
    trace: Vec<f64>,
    calls: u64,
) -> Explanation {
    let edges = ego
        .edges()
        .into_iter()
        .map(|(lu, lv)| {
            let selected = anchor.contains(&(lu, lv));
            ExplanationEdge {
                u: ego.global_id(lu),
                v: ego.global_id(lv),
                score: if selected { 1.0 } else { 0.0 },
                selected,
            }
        })
        .collect();
    Explanation {
        method: "anchors".into(),
        node: ego.global_id(ego.center()),
        hops: ego.hops(),
        edges,
        objective_trace: trace,
        surrogate_fidelity: None,
        calls,
        mask_spec: None,
        seed: 0,
    }
}

/// Gradient saliency explanation: |d loss / d A| on the ego edges,
/// min-max normalized into [0, 1].
///
/// Requires a differentiable black box; rule-based models produce an
/// unsupported-model error. A flat gradient (max equals min) yields
/// all-zero scores.
pub fn saliency_explain(blackbox: &dyn BlackBoxModel, ego: &EgoGraph) -> Result<Explanation> {
    if !blackbox.differentiable() {
        return Err(Error::UnsupportedModel("the saliency map".into()));
    }
    let counting = CountingModel::new(blackbox);
    let original = counting.predict(ego.adjacency(), ego.features(), ego.center())?;
    let c = original.argmax();
    let grad = counting.grad_adjacency(ego.adjacency(), ego.features(), ego.center(), c)?;
    if grad.dim() != ego.adjacency().dim() {
        return Err(Error::ShapeMismatch {
            context: "saliency gradient".into(),
            expected: format!("{:?}", ego.adjacency().dim()),
            got: format!("{:?}", grad.dim()),
        });
    }

    let edges = ego.edges();
    let raw: Vec<f64> = edges.iter().map(|&(u, v)| grad[[u, v]].abs()).collect();
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scores: Vec<f64> = if edges.is_empty() || max - min <= f64::EPSILON * max.abs().max(1.0) {
        vec![0.0; edges.len()]
    } else {
        raw.iter().map(|r| (r - min) / (max - min)).collect()
    };

    let edges_out = edges
        .iter()
        .zip(&scores)
        .map(|(&(lu, lv), &score)| ExplanationEdge {
            u: ego.global_id(lu),
            v: ego.global_id(lv),
            score,
            selected: score > 0.5,
        })
        .collect();
    Ok(Explanation {
        method: "saliency".into(),
        node: ego.global_id(ego.center()),
        hops: ego.hops(),
        edges: edges_out,
        objective_trace: Vec::new(),
        surrogate_fidelity: None,
        calls: counting.calls(),
        mask_spec: None,
        seed: 0,
    })
}

/// Uniform-random soft scores: the floor any learned explainer has to
/// beat.
pub fn uniform_random_explanation(ego: &EgoGraph, rng: &mut ChaCha8Rng) -> Explanation {
    use rand::Rng;
    let edges_out = ego
        .edges()
        .into_iter()
        .map(|(lu, lv)| {
            let score: f64 = rng.gen_range(0.0..1.0);
            ExplanationEdge {
                u: ego.global_id(lu),
                v: ego.global_id(lv),
                score,
                selected: score > 0.5,
            }
        })
        .collect();
    Explanation {
        method: "random".into(),
        node: ego.global_id(ego.center()),
        hops: ego.hops(),
        edges: edges_out,
        objective_trace: Vec::new(),
        surrogate_fidelity: None,
        calls: 0,
        mask_spec: None,
        seed: 0,
    }
}
