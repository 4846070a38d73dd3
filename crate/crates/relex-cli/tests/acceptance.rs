//! Acceptance gate: ten numbered criteria covering gradient integrity,
//! oracle agreement, benchmark orderings, the diversity mechanism, the
//! sampler contract, and end-to-end CLI determinism.
//!
//! Each test prints one `PASS criterion N` / `FAIL criterion N` line
//! (run with `-- --nocapture` to see them on success) and then asserts,
//! so a red test always names its criterion. The three benchmark runs
//! are shared between criteria 3-6 through `OnceLock`s: whichever test
//! gets there first trains the black box and the others reuse it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use relex::autodiff::{
    finite_difference_gradient, gumbel_pair_noise, max_relative_error, NodeId, Tape,
};
use relex::blackbox::{
    train_gcn, BlackBoxModel, ClassDistribution, GcnHyper, GcnModel, RuleModel,
};
use relex::eval::{
    auc_roc, auc_threshold_sweep, infidelity_exact, run_benchmark, select_nodes, AucResult,
    BenchmarkSettings, EvalReport, MethodKind,
};
use relex::explain::{
    build_dataset, learn_diverse_masks, learn_mask, mask_objective, mean_mask_cross_entropy,
    sample_perturbation, train_surrogate, MaskSpec, Surrogate, SurrogateHyper,
};
use relex::graph::{extract_ego, normalize_adjacency, EdgeScores, EgoGraph, Graph};
use relex::ndarray::Array2;
use relex::rng::stream_rng;
use relex::synth::{generate, BenchmarkKind, SynthConfig};

/// Prints the criterion's one-line verdict, then enforces it.
fn verdict(criterion: usize, ok: bool, detail: &str) {
    println!(
        "{} criterion {}: {}",
        if ok { "PASS" } else { "FAIL" },
        criterion,
        detail
    );
    assert!(ok, "criterion {} failed: {}", criterion, detail);
}

// ---------------------------------------------------------------------
// Shared construction helpers
// ---------------------------------------------------------------------

/// Random connected graph: a random tree (node v attaches to a uniform
/// earlier node) plus up to `extra` chords. With `max_depth` set, every
/// tree node stays within that many hops of node 0, so an ego extracted
/// at node 0 with that radius covers the whole graph.
fn random_connected_edges(
    n: usize,
    extra: usize,
    max_depth: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let mut depth = vec![0usize; n];
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for v in 1..n {
        let parent = loop {
            let p = rng.gen_range(0..v);
            match max_depth {
                Some(d) if depth[p] + 1 > d => continue,
                _ => break p,
            }
        };
        depth[v] = depth[parent] + 1;
        edges.insert((parent.min(v), parent.max(v)));
    }
    let mut placed = 0;
    let mut attempts = 0;
    while placed < extra && attempts < 100 {
        attempts += 1;
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        if edges.insert((u.min(v), u.max(v))) {
            placed += 1;
        }
    }
    edges.into_iter().collect()
}

/// Untrained GCN with random weights: a cheap deterministic black box
/// whose predictions still depend on the adjacency. Two convolutions
/// and a readout over their concatenation.
fn random_gcn(feature_dim: usize, classes: usize, rng: &mut ChaCha8Rng) -> GcnModel {
    let hidden = 4;
    let layers = [
        (feature_dim, hidden),
        (hidden, hidden),
        (2 * hidden, classes),
    ]
    .iter()
    .map(|&(r, c)| Array2::from_shape_fn((r, c), |_| rng.gen_range(-0.8..0.8)))
    .collect();
    GcnModel::from_layers(layers).unwrap()
}

/// One-hot distribution on the black box's predicted class at the
/// center, the target every mask is trained against.
fn one_hot_target(blackbox: &dyn BlackBoxModel, ego: &EgoGraph) -> ClassDistribution {
    let full = blackbox
        .predict(ego.adjacency(), ego.features(), ego.center())
        .unwrap();
    ClassDistribution::one_hot(full.argmax(), full.num_classes())
}

/// Quick surrogate fit for the small FD / oracle instances.
fn small_surrogate(
    ego: &EgoGraph,
    blackbox: &dyn BlackBoxModel,
    samples: usize,
    steps: usize,
    seed: u64,
) -> Surrogate {
    let dataset = build_dataset(ego, blackbox, samples, 0.5, &mut stream_rng(seed, 1)).unwrap();
    let hyper = SurrogateHyper {
        hidden_dim: 6,
        steps,
        batch_size: 16,
        ..SurrogateHyper::default()
    };
    train_surrogate(ego, &dataset, &hyper, &mut stream_rng(seed, 2))
        .unwrap()
        .0
}

// ---------------------------------------------------------------------
// Criterion 1: analytic gradients vs central finite differences
// ---------------------------------------------------------------------

/// Records the GCN training loss (renormalized adjacency, biased relu
/// convolutions, readout over the concatenated depths, weighted
/// softmax cross-entropy over rows) and returns the parameter nodes —
/// convolution weights, their biases, readout, readout bias — plus the
/// loss node.
fn record_gcn_loss(
    tape: &mut Tape,
    a: &Array2<f64>,
    x: &Array2<f64>,
    params: &[Array2<f64>],
    targets: &Array2<f64>,
    row_weights: &Array2<f64>,
) -> (Vec<NodeId>, NodeId) {
    let convs = (params.len() - 2) / 2;
    let a = tape.input(a.clone());
    let a_norm = tape.normalize_adjacency(a).unwrap();
    let x = tape.input(x.clone());
    let ones_col = tape.input(Array2::ones((targets.nrows(), 1)));
    let param_nodes: Vec<NodeId> = params.iter().map(|p| tape.input(p.clone())).collect();
    let mut h = x;
    let mut depths = Vec::with_capacity(convs);
    for layer in 0..convs {
        let prop = tape.matmul(a_norm, h).unwrap();
        let lin = tape.matmul(prop, param_nodes[layer]).unwrap();
        let bias = tape.matmul(ones_col, param_nodes[convs + layer]).unwrap();
        let pre = tape.add(lin, bias).unwrap();
        h = tape.relu(pre);
        depths.push(h);
    }
    let cat = tape.concat_cols(&depths).unwrap();
    let lin = tape.matmul(cat, param_nodes[2 * convs]).unwrap();
    let bias = tape.matmul(ones_col, param_nodes[2 * convs + 1]).unwrap();
    let logits = tape.add(lin, bias).unwrap();
    let t = tape.input(targets.clone());
    let w = tape.input(row_weights.clone());
    let loss = tape.softmax_cross_entropy(logits, t, w).unwrap();
    (param_nodes, loss)
}

/// Records the surrogate training loss: per-layer bias + relu forward,
/// all layers' center rows concatenated into the readout, mean
/// cross-entropy against the responses. `params` is laid out as layer
/// weights, layer biases, readout, readout bias.
fn record_surrogate_loss(
    tape: &mut Tape,
    normalized: &[Array2<f64>],
    x: &Array2<f64>,
    center: usize,
    depth: usize,
    params: &[Array2<f64>],
    targets: &[Array2<f64>],
) -> (Vec<NodeId>, NodeId) {
    let n = x.nrows();
    let ones_col = tape.input(Array2::ones((n, 1)));
    let one = tape.input(Array2::ones((1, 1)));
    let x = tape.input(x.clone());
    let param_nodes: Vec<NodeId> = params.iter().map(|p| tape.input(p.clone())).collect();
    let mut ces = Vec::with_capacity(normalized.len());
    for (a_norm_val, target) in normalized.iter().zip(targets) {
        let a_norm = tape.input(a_norm_val.clone());
        let mut h = x;
        let mut center_rows = Vec::with_capacity(depth);
        for layer in 0..depth {
            let prop = tape.matmul(a_norm, h).unwrap();
            let lin = tape.matmul(prop, param_nodes[layer]).unwrap();
            let bias = tape.matmul(ones_col, param_nodes[depth + layer]).unwrap();
            let pre = tape.add(lin, bias).unwrap();
            h = tape.relu(pre);
            center_rows.push(tape.row_select(h, center).unwrap());
        }
        let cat = tape.concat_cols(&center_rows).unwrap();
        let logits = tape.matmul(cat, param_nodes[2 * depth]).unwrap();
        let logits = tape.add(logits, param_nodes[2 * depth + 1]).unwrap();
        let t = tape.input(target.clone());
        ces.push(tape.softmax_cross_entropy(logits, t, one).unwrap());
    }
    let coeffs = vec![1.0 / ces.len() as f64; ces.len()];
    let loss = tape.scalar_combine(&ces, &coeffs).unwrap();
    (param_nodes, loss)
}

enum MaskTransform<'a> {
    Sigmoid,
    /// Fixed noise and temperature, so the objective is a deterministic
    /// differentiable function of the parameters.
    Gumbel { noise: &'a Array2<f64>, tau: f64 },
}

/// Records the full mask objective (cross-entropy through the surrogate
/// plus both sparsity penalties) as a function of the raw parameters,
/// with the given parameterization in between.
fn record_mask_objective(
    tape: &mut Tape,
    surrogate: &Surrogate,
    ego: &EgoGraph,
    target: &ClassDistribution,
    spec: &MaskSpec,
    w: &Array2<f64>,
    transform: &MaskTransform,
) -> (NodeId, NodeId) {
    let w_node = tape.input(w.clone());
    let m = match transform {
        MaskTransform::Sigmoid => tape.sigmoid(w_node),
        MaskTransform::Gumbel { noise, tau } => {
            let nz = tape.input((*noise).clone());
            tape.gumbel_softmax_pair(w_node, nz, *tau).unwrap()
        }
    };
    let edges = ego.edges();
    let mask_matrix = tape.scatter_edges(m, &edges, ego.num_nodes()).unwrap();
    let a = tape.input(ego.adjacency().clone());
    let masked = tape.hadamard(a, mask_matrix).unwrap();
    let x = tape.input(ego.features().clone());
    let logits = surrogate
        .forward_raw(tape, masked, x, ego.center(), ego.num_nodes())
        .unwrap();
    let t = tape.input(Array2::from_shape_fn((1, target.num_classes()), |(_, c)| {
        target.prob(c)
    }));
    let one = tape.input(Array2::ones((1, 1)));
    let ce = tape.softmax_cross_entropy(logits, t, one).unwrap();
    let l1 = tape.l1_norm(m);
    let l21 = tape.l21_norm(mask_matrix);
    let j = tape
        .scalar_combine(&[ce, l1, l21], &[1.0, spec.l1_weight, spec.l21_weight])
        .unwrap();
    (w_node, j)
}

#[test]
fn criterion_01_gradient_integrity() {
    let start = Instant::now();
    let step = 1e-5;
    let bound = 1e-4;

    // 3-layer GCN training loss, gradients wrt every layer's weights.
    let mut worst_gcn = 0.0f64;
    for inst in 0..20u64 {
        let mut rng = stream_rng(100 + inst, 0);
        let n = rng.gen_range(5..=9);
        let edges = random_connected_edges(n, rng.gen_range(0..=3), None, &mut rng);
        let a = Graph::build(n, &edges, None, None, None).unwrap().to_dense();
        let x = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let classes = rng.gen_range(2..=3);
        let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let mut targets = Array2::zeros((n, classes));
        for (v, &class) in labels.iter().enumerate() {
            targets[[v, class]] = 1.0;
        }
        let row_weights = Array2::ones((n, 1));
        // Convolution weights, conv biases, readout, readout bias.
        let dims = [(3, 4), (4, 4), (4, 4), (1, 4), (1, 4), (1, 4), (12, classes), (1, classes)];
        let params: Vec<Array2<f64>> = dims
            .iter()
            .map(|&(r, c)| Array2::from_shape_fn((r, c), |_| rng.gen_range(-0.8..0.8)))
            .collect();

        let mut tape = Tape::new();
        let (param_nodes, loss) =
            record_gcn_loss(&mut tape, &a, &x, &params, &targets, &row_weights);
        tape.backward(loss).unwrap();
        for (k, &pn) in param_nodes.iter().enumerate() {
            let analytic = tape.adjoint(pn).clone();
            let fd = finite_difference_gradient(
                |alt| {
                    let mut p2 = params.clone();
                    p2[k] = alt.clone();
                    let mut t2 = Tape::new();
                    let (_, l) = record_gcn_loss(&mut t2, &a, &x, &p2, &targets, &row_weights);
                    t2.scalar(l)
                },
                &params[k],
                step,
            );
            worst_gcn = worst_gcn.max(max_relative_error(&analytic, &fd));
        }
    }

    // Surrogate training loss, gradients wrt weights, biases, readout.
    let mut worst_sur = 0.0f64;
    for inst in 0..20u64 {
        let mut rng = stream_rng(200 + inst, 0);
        let n = rng.gen_range(5..=8);
        let edges = random_connected_edges(n, rng.gen_range(0..=3), Some(2), &mut rng);
        let graph = Graph::build(n, &edges, None, None, None).unwrap();
        let ego = extract_ego(&graph, 0, 2).unwrap();
        let depth = 2;
        let hidden = 4;
        let classes = 2;
        let normalized: Vec<Array2<f64>> = (0..3)
            .map(|_| normalize_adjacency(&sample_perturbation(&ego, 0.6, &mut rng).unwrap()))
            .collect();
        let targets: Vec<Array2<f64>> = (0..3)
            .map(|_| {
                let p = rng.gen_range(0.05..0.95);
                Array2::from_shape_fn((1, classes), |(_, c)| if c == 0 { p } else { 1.0 - p })
            })
            .collect();
        let mut params: Vec<Array2<f64>> = vec![
            Array2::from_shape_fn((1, hidden), |_| rng.gen_range(-0.8..0.8)),
            Array2::from_shape_fn((hidden, hidden), |_| rng.gen_range(-0.8..0.8)),
        ];
        params.push(Array2::from_shape_fn((1, hidden), |_| rng.gen_range(-0.3..0.3)));
        params.push(Array2::from_shape_fn((1, hidden), |_| rng.gen_range(-0.3..0.3)));
        params.push(Array2::from_shape_fn((depth * hidden, classes), |_| {
            rng.gen_range(-0.8..0.8)
        }));
        params.push(Array2::from_shape_fn((1, classes), |_| rng.gen_range(-0.3..0.3)));

        let mut tape = Tape::new();
        let (param_nodes, loss) = record_surrogate_loss(
            &mut tape,
            &normalized,
            ego.features(),
            ego.center(),
            depth,
            &params,
            &targets,
        );
        tape.backward(loss).unwrap();
        for (k, &pn) in param_nodes.iter().enumerate() {
            let analytic = tape.adjoint(pn).clone();
            let fd = finite_difference_gradient(
                |alt| {
                    let mut p2 = params.clone();
                    p2[k] = alt.clone();
                    let mut t2 = Tape::new();
                    let (_, l) = record_surrogate_loss(
                        &mut t2,
                        &normalized,
                        ego.features(),
                        ego.center(),
                        depth,
                        &p2,
                        &targets,
                    );
                    t2.scalar(l)
                },
                &params[k],
                step,
            );
            worst_sur = worst_sur.max(max_relative_error(&analytic, &fd));
        }
    }

    // Both mask objectives through a genuinely trained surrogate. The
    // sigmoid recording is also pinned to the library's own objective
    // at the transformed values, so the finite-difference oracle covers
    // the production loss and not a lookalike.
    let mut worst_sig = 0.0f64;
    let mut worst_gum = 0.0f64;
    let mut worst_pin = 0.0f64;
    for inst in 0..20u64 {
        let mut rng = stream_rng(300 + inst, 0);
        let edges = random_connected_edges(6, rng.gen_range(0..=3), Some(2), &mut rng);
        let graph = Graph::build(6, &edges, None, None, None).unwrap();
        let ego = extract_ego(&graph, 0, 2).unwrap();
        let bb = random_gcn(graph.feature_dim(), 2, &mut rng);
        let surrogate = small_surrogate(&ego, &bb, 30, 60, 300 + inst);
        let target = one_hot_target(&bb, &ego);
        let spec = MaskSpec::sigmoid();
        let e = ego.edges().len();
        let w0 = Array2::from_shape_fn((e, 1), |_| rng.gen_range(-1.0..1.0));

        let fd_check = |transform: &MaskTransform| -> f64 {
            let mut tape = Tape::new();
            let (w_node, j) =
                record_mask_objective(&mut tape, &surrogate, &ego, &target, &spec, &w0, transform);
            tape.backward(j).unwrap();
            let analytic = tape.adjoint(w_node).clone();
            let fd = finite_difference_gradient(
                |alt| {
                    let mut t2 = Tape::new();
                    let (_, j2) = record_mask_objective(
                        &mut t2, &surrogate, &ego, &target, &spec, alt, transform,
                    );
                    t2.scalar(j2)
                },
                &w0,
                step,
            );
            max_relative_error(&analytic, &fd)
        };

        worst_sig = worst_sig.max(fd_check(&MaskTransform::Sigmoid));
        let noise = gumbel_pair_noise(e, 1, &mut rng);
        worst_gum = worst_gum.max(fd_check(&MaskTransform::Gumbel {
            noise: &noise,
            tau: 1.0,
        }));

        let mut tape = Tape::new();
        let (_, j) = record_mask_objective(
            &mut tape,
            &surrogate,
            &ego,
            &target,
            &spec,
            &w0,
            &MaskTransform::Sigmoid,
        );
        let mine = tape.scalar(j);
        let sig_values: Vec<f64> = w0.iter().map(|&w| 1.0 / (1.0 + (-w).exp())).collect();
        let lib = mask_objective(&surrogate, &ego, &target, &spec, &sig_values).unwrap();
        worst_pin = worst_pin.max((mine - lib).abs());
    }

    let elapsed = start.elapsed();
    let ok = worst_gcn < bound
        && worst_sur < bound
        && worst_sig < bound
        && worst_gum < bound
        && worst_pin < 1e-9
        && elapsed < Duration::from_secs(60);
    verdict(
        1,
        ok,
        &format!(
            "max relative FD error: gcn {:.2e}, surrogate {:.2e}, sigmoid mask {:.2e}, \
             gumbel mask {:.2e} (objective pin {:.1e}) in {:.1?}",
            worst_gcn, worst_sur, worst_sig, worst_gum, worst_pin, elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 2: learned Gumbel masks vs the exhaustive subset minimum
// ---------------------------------------------------------------------

#[test]
fn criterion_02_gumbel_matches_exhaustive_minimum() {
    let start = Instant::now();
    let cases = 25u64;
    let mut hits = 0usize;
    for case in 0..cases {
        let mut rng = stream_rng(400 + case, 0);
        let extra = rng.gen_range(0..=4);
        let edges = random_connected_edges(6, extra, Some(2), &mut rng);
        let graph = Graph::build(6, &edges, None, None, None).unwrap();
        let ego = extract_ego(&graph, 0, 2).unwrap();
        let e = ego.edges().len();
        assert!(ego.num_nodes() == 6 && e <= 9, "case shape {} nodes {} edges", ego.num_nodes(), e);

        let bb = random_gcn(graph.feature_dim(), 2, &mut rng);
        let surrogate = small_surrogate(&ego, &bb, 40, 80, 400 + case);
        let target = one_hot_target(&bb, &ego);
        let spec = MaskSpec::gumbel();

        let expl = learn_mask(&surrogate, &ego, &target, &spec, &mut stream_rng(400 + case, 3))
            .unwrap();
        let final_scores = expl.to_edge_scores(&ego).unwrap().per_edge(&ego);
        let achieved = mask_objective(&surrogate, &ego, &target, &spec, &final_scores).unwrap();

        let mut best = f64::INFINITY;
        for bits in 0..(1u32 << e) {
            let values: Vec<f64> = (0..e)
                .map(|i| if bits >> i & 1 == 1 { 1.0 } else { 0.0 })
                .collect();
            let j = mask_objective(&surrogate, &ego, &target, &spec, &values).unwrap();
            best = best.min(j);
        }
        if achieved <= 1.05 * best + 1e-12 {
            hits += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = hits >= 20 && elapsed < Duration::from_secs(300);
    verdict(
        2,
        ok,
        &format!(
            "Gumbel mask within 5% of the exhaustive subset minimum in {}/{} cases in {:.1?}",
            hits, cases, elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// Criteria 3-6: shared benchmark runs
// ---------------------------------------------------------------------

struct BenchOutcome {
    report: EvalReport,
    train_accuracy: Option<f64>,
    selected: usize,
    elapsed: Duration,
}

const BENCH_SEED: u64 = 11;

fn bench_synth_config(kind: BenchmarkKind) -> SynthConfig {
    let mut config = SynthConfig {
        tree_height: 5,
        motif_count: 24,
        grid_side: 3,
        ba_size: 5,
        ba_attach: 2,
        noise_edges: 0,
        seed: BENCH_SEED,
    };
    config.noise_edges = config.base_edge_count(kind) / 10;
    config
}

fn bench_settings() -> BenchmarkSettings {
    let mut settings = BenchmarkSettings::new(BENCH_SEED);
    settings.methods = vec![
        MethodKind::RelexGumbel,
        MethodKind::RelexSigmoid,
        MethodKind::Saliency,
        MethodKind::Random,
    ];
    settings.hops = 3;
    settings.node_cap = 26;
    settings.infidelity_samples = 100;
    settings.relex.num_samples = 600;
    settings.relex.surrogate.steps = 200;
    settings.relex.mask.iterations = 250;
    settings
}

fn gcn_bench(kind: BenchmarkKind) -> BenchOutcome {
    let start = Instant::now();
    let labeled = generate(kind, &bench_synth_config(kind)).unwrap();
    let n = labeled.graph.num_nodes();
    // Constant features make the loss surface plateau-heavy; the long
    // gentle schedule with restarts is what reliably escapes them.
    let hyper = GcnHyper {
        hidden_dim: 40,
        epochs: 6000,
        learning_rate: 0.005,
        init_scale: 0.3,
        restarts: 6,
        seed: BENCH_SEED,
    };
    let (model, train) = train_gcn(&labeled.graph, &vec![true; n], &hyper).unwrap();
    let settings = bench_settings();
    let report = run_benchmark(&labeled, &model, &settings, &BTreeSet::new()).unwrap();
    BenchOutcome {
        report,
        train_accuracy: Some(train.train_accuracy),
        selected: select_nodes(&labeled, settings.node_cap, settings.seed).len(),
        elapsed: start.elapsed(),
    }
}

fn tree_ba_bench() -> &'static BenchOutcome {
    static ONCE: OnceLock<BenchOutcome> = OnceLock::new();
    ONCE.get_or_init(|| gcn_bench(BenchmarkKind::TreeBa))
}

fn tree_grid_bench() -> &'static BenchOutcome {
    static ONCE: OnceLock<BenchOutcome> = OnceLock::new();
    ONCE.get_or_init(|| gcn_bench(BenchmarkKind::TreeGrid))
}

fn rules_bench() -> &'static BenchOutcome {
    static ONCE: OnceLock<BenchOutcome> = OnceLock::new();
    ONCE.get_or_init(|| {
        let start = Instant::now();
        let kind = BenchmarkKind::TreeGridBa;
        let mut labeled = generate(kind, &bench_synth_config(kind)).unwrap();
        let n = labeled.graph.num_nodes();
        let model = RuleModel::fit(&labeled.graph, 0.3, vec![1.0, 0.5, 0.25], 1e-3, BENCH_SEED)
            .unwrap();
        // The rule model reads class evidence from its observation
        // features, so queries must run on those.
        labeled.graph = labeled
            .graph
            .with_features(model.seed_features(n))
            .unwrap();
        let settings = bench_settings();
        let report = run_benchmark(&labeled, &model, &settings, &BTreeSet::new()).unwrap();
        BenchOutcome {
            report,
            train_accuracy: None,
            selected: select_nodes(&labeled, settings.node_cap, settings.seed).len(),
            elapsed: start.elapsed(),
        }
    })
}

/// Mean AUC over the records where it is defined, with that count.
fn mean_auc(report: &EvalReport, method: &str) -> (f64, usize) {
    let values: Vec<f64> = report
        .records
        .iter()
        .filter(|r| r.method == method)
        .filter_map(|r| r.auc)
        .collect();
    if values.is_empty() {
        return (f64::NAN, 0);
    }
    (values.iter().sum::<f64>() / values.len() as f64, values.len())
}

/// Per-node infidelity map for one method.
fn infidelity_by_node(report: &EvalReport, method: &str) -> BTreeMap<usize, f64> {
    report
        .records
        .iter()
        .filter(|r| r.method == method)
        .map(|r| (r.node, r.infidelity))
        .collect()
}

#[test]
fn criterion_03_tree_ba_ordering() {
    let bench = tree_ba_bench();
    let accuracy = bench.train_accuracy.unwrap();
    let (gumbel, n_gumbel) = mean_auc(&bench.report, "relex-gumbel");
    let (saliency, n_saliency) = mean_auc(&bench.report, "saliency");
    let ok = accuracy >= 0.95
        && n_gumbel >= 20
        && n_saliency >= 20
        && gumbel >= 0.70
        && gumbel - saliency >= 0.15
        && bench.elapsed < Duration::from_secs(1200);
    verdict(
        3,
        ok,
        &format!(
            "tree-ba: GCN train accuracy {:.3}, mean AUC gumbel {:.4} ({} nodes) vs \
             saliency {:.4} ({} nodes) in {:.0?}",
            accuracy, gumbel, n_gumbel, saliency, n_saliency, bench.elapsed
        ),
    );
}

#[test]
fn criterion_04_tree_grid_ordering() {
    let bench = tree_grid_bench();
    let (gumbel, n_gumbel) = mean_auc(&bench.report, "relex-gumbel");
    let (saliency, n_saliency) = mean_auc(&bench.report, "saliency");
    let ok = n_gumbel >= 20
        && gumbel > 0.5
        && gumbel >= saliency
        && bench.elapsed < Duration::from_secs(1200);
    verdict(
        4,
        ok,
        &format!(
            "tree-grid: mean AUC gumbel {:.4} ({} nodes) vs saliency {:.4} ({} nodes) in {:.0?}",
            gumbel, n_gumbel, saliency, n_saliency, bench.elapsed
        ),
    );
}

#[test]
fn criterion_05_model_agnostic_rules() {
    let bench = rules_bench();
    let (gumbel, n_gumbel) = mean_auc(&bench.report, "relex-gumbel");
    let (sigmoid, n_sigmoid) = mean_auc(&bench.report, "relex-sigmoid");

    let saliency_records = bench
        .report
        .records
        .iter()
        .filter(|r| r.method == "saliency")
        .count();
    let saliency_errors: Vec<_> = bench
        .report
        .errors
        .iter()
        .filter(|e| e.method == "saliency")
        .collect();
    let refused_cleanly = saliency_records == 0
        && saliency_errors.len() == bench.selected
        && saliency_errors
            .iter()
            .all(|e| e.message.contains("does not expose adjacency gradients"));

    println!(
        "note criterion 5: mean AUC sigmoid {:.4} vs gumbel {:.4}{}",
        sigmoid,
        gumbel,
        if sigmoid >= gumbel {
            " (sigmoid leads, as in the reference runs)"
        } else {
            " (informational: gumbel leads on this configuration)"
        }
    );

    let ok = n_gumbel >= 20
        && n_sigmoid >= 20
        && gumbel > 0.5
        && sigmoid > 0.5
        && refused_cleanly
        && bench.elapsed < Duration::from_secs(1200);
    verdict(
        5,
        ok,
        &format!(
            "rule-based box: mean AUC gumbel {:.4} ({} nodes), sigmoid {:.4} ({} nodes), \
             saliency refused on all {} nodes in {:.0?}",
            gumbel, n_gumbel, sigmoid, n_sigmoid, bench.selected, bench.elapsed
        ),
    );
}

#[test]
fn criterion_06_infidelity_not_worse_than_random() {
    let benches = [
        ("tree-ba", tree_ba_bench()),
        ("tree-grid", tree_grid_bench()),
        ("tree-grid-ba", rules_bench()),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, bench) in benches {
        let random = infidelity_by_node(&bench.report, "random");
        for variant in ["relex-gumbel", "relex-sigmoid"] {
            let ours = infidelity_by_node(&bench.report, variant);
            // Same node set, so the comparison is over shared draws.
            assert_eq!(
                ours.keys().collect::<Vec<_>>(),
                random.keys().collect::<Vec<_>>(),
                "{} and random scored different node sets on {}",
                variant,
                name
            );
            let mean = |m: &BTreeMap<usize, f64>| {
                m.values().sum::<f64>() / m.len() as f64
            };
            let mine = mean(&ours);
            let theirs = mean(&random);
            if mine > theirs {
                ok = false;
            }
            details.push(format!("{} {} {:.4} vs random {:.4}", name, variant, mine, theirs));
        }
    }
    verdict(6, ok, &format!("mean infidelity {}", details.join("; ")));
}

// ---------------------------------------------------------------------
// Criterion 7: the diversity term separates masks without wrecking them
// ---------------------------------------------------------------------

#[test]
fn criterion_07_diverse_masks() {
    let start = Instant::now();
    let config = SynthConfig {
        tree_height: 4,
        motif_count: 6,
        grid_side: 3,
        ba_size: 5,
        ba_attach: 1,
        noise_edges: 8,
        seed: 21,
    };
    let labeled = generate(BenchmarkKind::TreeGrid, &config).unwrap();
    let n = labeled.graph.num_nodes();
    let hyper = GcnHyper {
        epochs: 600,
        hidden_dim: 16,
        seed: 21,
        ..GcnHyper::default()
    };
    let (model, _) = train_gcn(&labeled.graph, &vec![true; n], &hyper).unwrap();
    // Center node of the first grid motif: a node with alternative
    // substructures inside its ego, which is what diversity needs.
    let node = labeled.nodes_of_class(1)[4];
    let ego = extract_ego(&labeled.graph, node, 3).unwrap();
    let target = one_hot_target(&model, &ego);

    let mut spec_diverse = MaskSpec::sigmoid();
    spec_diverse.iterations = 200;
    spec_diverse.diversity_weight = 0.5;
    let mut spec_plain = spec_diverse.clone();
    spec_plain.diversity_weight = 0.0;
    // The task loss is the classification term alone.
    let mut spec_task = spec_plain.clone();
    spec_task.l1_weight = 0.0;
    spec_task.l21_weight = 0.0;

    let mut ce_diverse = Vec::new();
    let mut ce_plain = Vec::new();
    let mut task_ok = true;
    let mut task_ratios: Vec<f64> = Vec::new();
    for seed in 0..10u64 {
        let mut rng = stream_rng(700 + seed, 0);
        let dataset = build_dataset(&ego, &model, 400, 0.5, &mut rng).unwrap();
        let sur_hyper = SurrogateHyper {
            hidden_dim: 12,
            steps: 200,
            ..SurrogateHyper::default()
        };
        let (surrogate, _) = train_surrogate(&ego, &dataset, &sur_hyper, &mut rng).unwrap();
        let mask_rng = rng.clone();

        let diverse =
            learn_diverse_masks(&surrogate, &ego, &target, &spec_diverse, 2, &mut mask_rng.clone())
                .unwrap();
        let plain =
            learn_diverse_masks(&surrogate, &ego, &target, &spec_plain, 2, &mut mask_rng.clone())
                .unwrap();

        let scores =
            |e: &relex::explain::Explanation| -> Vec<f64> { e.edges.iter().map(|d| d.score).collect() };
        // Without the diversity term both masks must coincide: they are
        // learned from identical snapshots of the same generator.
        assert_eq!(scores(&plain[0]), scores(&plain[1]));

        ce_diverse.push(mean_mask_cross_entropy(&scores(&diverse[0]), &scores(&diverse[1])));
        ce_plain.push(mean_mask_cross_entropy(&scores(&plain[0]), &scores(&plain[1])));

        let task = |expl: &relex::explain::Explanation| -> f64 {
            let per_edge = expl.to_edge_scores(&ego).unwrap().per_edge(&ego);
            mask_objective(&surrogate, &ego, &target, &spec_task, &per_edge).unwrap()
        };
        let single = task(&plain[0]);
        for expl in &diverse {
            let ratio = task(expl) / single;
            task_ratios.push(ratio);
            if task(expl) > 1.2 * single + 1e-12 {
                task_ok = false;
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let elapsed = start.elapsed();
    let ok = mean(&ce_diverse) > mean(&ce_plain) && task_ok;
    verdict(
        7,
        ok,
        &format!(
            "pairwise mask cross-entropy {:.4} with diversity vs {:.4} without; \
             worst task-loss ratio {:.3} (10 seeds, {:.0?})",
            mean(&ce_diverse),
            mean(&ce_plain),
            task_ratios.iter().cloned().fold(f64::MIN, f64::max),
            elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 8: sampler invariants and the path-graph conditional
// ---------------------------------------------------------------------

/// Every sampled perturbation must be a symmetric edge-subset of the
/// ego adjacency whose kept edges form one component around the center.
fn sample_is_valid(ego: &EgoGraph, sample: &Array2<f64>) -> bool {
    let a = ego.adjacency();
    let n = ego.num_nodes();
    for i in 0..n {
        for j in 0..n {
            if sample[[i, j]] != sample[[j, i]] {
                return false;
            }
            if sample[[i, j]] != 0.0 && sample[[i, j]] != a[[i, j]] {
                return false;
            }
        }
    }
    let touched: BTreeSet<usize> = (0..n)
        .filter(|&i| (0..n).any(|j| sample[[i, j]] != 0.0))
        .collect();
    if touched.is_empty() {
        return true;
    }
    if !touched.contains(&ego.center()) {
        return false;
    }
    let mut seen = BTreeSet::from([ego.center()]);
    let mut queue = vec![ego.center()];
    while let Some(u) = queue.pop() {
        for v in 0..n {
            if sample[[u, v]] != 0.0 && seen.insert(v) {
                queue.push(v);
            }
        }
    }
    touched.is_subset(&seen)
}

#[test]
fn criterion_08_sampler_contract() {
    let start = Instant::now();
    // 10000 draws spread over 50 randomized ego graphs.
    let mut checked = 0usize;
    for g in 0..50u64 {
        let mut rng = stream_rng(800 + g, 0);
        let n = rng.gen_range(4..=12);
        let edges = random_connected_edges(n, rng.gen_range(0..=4), None, &mut rng);
        let graph = Graph::build(n, &edges, None, None, None).unwrap();
        let center = rng.gen_range(0..n);
        let ego = extract_ego(&graph, center, 2).unwrap();
        let keep_prob = [0.3, 0.5, 0.8][(g % 3) as usize];
        for _ in 0..200 {
            let sample = sample_perturbation(&ego, keep_prob, &mut rng).unwrap();
            assert!(sample_is_valid(&ego, &sample), "invalid sample on graph {}", g);
            checked += 1;
        }
    }

    // Path 0-1-2-3 from the center: each deeper edge is only reachable
    // once its predecessor is kept, and is then kept with probability
    // exactly keep_prob.
    let path = Graph::build(4, &[(0, 1), (1, 2), (2, 3)], None, None, None).unwrap();
    let ego = extract_ego(&path, 0, 3).unwrap();
    let local: Vec<(usize, usize)> = (0..3)
        .map(|i| {
            let u = ego.local_index(i).unwrap();
            let v = ego.local_index(i + 1).unwrap();
            (u, v)
        })
        .collect();
    let mut rng = stream_rng(850, 0);
    let draws = 10000;
    let mut kept_counts = [0usize; 3];
    let mut order_violations = 0usize;
    for _ in 0..draws {
        let sample = sample_perturbation(&ego, 0.5, &mut rng).unwrap();
        let kept: Vec<bool> = local.iter().map(|&(u, v)| sample[[u, v]] != 0.0).collect();
        for i in 0..3 {
            if kept[i] {
                kept_counts[i] += 1;
            }
            if i > 0 && kept[i] && !kept[i - 1] {
                order_violations += 1;
            }
        }
    }
    let first = kept_counts[0] as f64 / draws as f64;
    let cond1 = kept_counts[1] as f64 / kept_counts[0] as f64;
    let cond2 = kept_counts[2] as f64 / kept_counts[1] as f64;
    let conditionals_ok = (first - 0.5).abs() < 0.02
        && (cond1 - 0.5).abs() < 0.02
        && (cond2 - 0.5).abs() < 0.02;

    let elapsed = start.elapsed();
    let ok = checked == 10000 && order_violations == 0 && conditionals_ok;
    verdict(
        8,
        ok,
        &format!(
            "{} samples valid; path conditionals {:.3}/{:.3}/{:.3} (expect 0.5), \
             {} order violations in {:.1?}",
            checked, first, cond1, cond2, order_violations, elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 9: metric implementations vs independent oracles
// ---------------------------------------------------------------------

/// Star ego with `e` leaf edges, the simplest shape whose edge list is
/// fully under the test's control.
fn star_ego(e: usize) -> EgoGraph {
    let edges: Vec<(usize, usize)> = (1..=e).map(|v| (0, v)).collect();
    let graph = Graph::build(e + 1, &edges, None, None, None).unwrap();
    extract_ego(&graph, 0, 1).unwrap()
}

#[test]
fn criterion_09_metric_oracles() {
    let start = Instant::now();

    // auc_roc against the threshold-sweep construction, ties included.
    let mut compared = 0usize;
    let mut undefined = 0usize;
    let mut worst_gap = 0.0f64;
    for case in 0..1000u64 {
        let mut rng = stream_rng(900 + case, 0);
        let e = rng.gen_range(2..=18);
        let ego = star_ego(e);
        let edges = ego.edges();
        let scores: Vec<f64> = (0..e)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    // Quantized scores force ties across edges.
                    rng.gen_range(0..4) as f64 / 3.0
                } else {
                    rng.gen_range(0.0..1.0)
                }
            })
            .collect();
        let labels: Vec<bool> = (0..e).map(|_| rng.gen_bool(0.4)).collect();
        let right: BTreeSet<(usize, usize)> = edges
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l)
            .map(|(&e, _)| e)
            .collect();
        let edge_scores = EdgeScores::from_edge_values(&ego, &scores).unwrap();
        let ours = auc_roc(&edge_scores, &right, &ego).unwrap();
        let sweep = auc_threshold_sweep(&scores, &labels);
        match (ours, sweep) {
            (AucResult::Undefined, None) => undefined += 1,
            (AucResult::Value(v), Some(s)) => {
                worst_gap = worst_gap.max((v - s).abs());
                compared += 1;
            }
            (got, sweep) => panic!(
                "definedness disagreement on case {}: {:?} vs {:?}",
                case, got, sweep
            ),
        }
    }
    let auc_ok = compared + undefined == 1000 && worst_gap < 1e-9;

    // Exact infidelity against hand-enumerated removal distributions on
    // one- and two-edge egos. The closed forms below walk the frontier
    // process directly: a path tries its second edge only after the
    // first is kept, a star tries both independently.
    let mut worst_infid = 0.0f64;
    for case in 0..20u64 {
        let mut rng = stream_rng(950 + case, 0);
        let keep_prob = rng.gen_range(0.2..0.8);

        // Single edge 0-1: outcomes keep (p) and drop (1-p).
        {
            let ego = star_ego(1);
            let bb = random_gcn(1, 2, &mut rng);
            let s = rng.gen_range(0.1..0.9);
            let scores = EdgeScores::from_edge_values(&ego, &[s]).unwrap();
            let full = bb.predict(ego.adjacency(), ego.features(), ego.center()).unwrap();
            let class = full.argmax();
            let f_full = full.prob(class);
            let empty = Array2::zeros((2, 2));
            let f_empty = bb.predict(&empty, ego.features(), ego.center()).unwrap().prob(class);
            let keep_term = 0.0 - (f_full - f_full);
            let drop_term = s - (f_full - f_empty);
            let expected = keep_prob * keep_term * keep_term
                + (1.0 - keep_prob) * drop_term * drop_term;
            let got = infidelity_exact(&bb, &ego, &scores, keep_prob).unwrap();
            worst_infid = worst_infid.max((got - expected).abs());
        }

        // Star 0-1, 0-2: four outcomes with independent probabilities.
        {
            let ego = star_ego(2);
            let bb = random_gcn(1, 2, &mut rng);
            let edges = ego.edges();
            let s: Vec<f64> = (0..2).map(|_| rng.gen_range(0.1..0.9)).collect();
            let scores = EdgeScores::from_edge_values(&ego, &s).unwrap();
            let full = bb.predict(ego.adjacency(), ego.features(), ego.center()).unwrap();
            let class = full.argmax();
            let f_full = full.prob(class);
            let p = keep_prob;
            let mut expected = 0.0;
            for bits in 0..4u32 {
                let mut kept = Array2::zeros((3, 3));
                let mut prob = 1.0;
                let mut removed = 0.0;
                for (i, &(u, v)) in edges.iter().enumerate() {
                    if bits >> i & 1 == 1 {
                        kept[[u, v]] = 1.0;
                        kept[[v, u]] = 1.0;
                        prob *= p;
                    } else {
                        prob *= 1.0 - p;
                        removed += s[i];
                    }
                }
                let f_kept = bb.predict(&kept, ego.features(), ego.center()).unwrap().prob(class);
                let term = removed - (f_full - f_kept);
                expected += prob * term * term;
            }
            let got = infidelity_exact(&bb, &ego, &scores, keep_prob).unwrap();
            worst_infid = worst_infid.max((got - expected).abs());
        }

        // Path 0-1-2 from the center: the far edge is conditional on
        // the near one, so outcomes are {}, {near}, {near, far}.
        {
            let graph = Graph::build(3, &[(0, 1), (1, 2)], None, None, None).unwrap();
            let ego = extract_ego(&graph, 0, 2).unwrap();
            let bb = random_gcn(1, 2, &mut rng);
            let near = (ego.local_index(0).unwrap(), ego.local_index(1).unwrap());
            let far = (ego.local_index(1).unwrap(), ego.local_index(2).unwrap());
            let edges = ego.edges();
            let sv: Vec<f64> = (0..2).map(|_| rng.gen_range(0.1..0.9)).collect();
            let scores = EdgeScores::from_edge_values(&ego, &sv).unwrap();
            let score_of = |e: (usize, usize)| -> f64 {
                let canon = (e.0.min(e.1), e.0.max(e.1));
                let idx = edges
                    .iter()
                    .position(|&(u, v)| (u.min(v), u.max(v)) == canon)
                    .unwrap();
                sv[idx]
            };
            let full = bb.predict(ego.adjacency(), ego.features(), ego.center()).unwrap();
            let class = full.argmax();
            let f_full = full.prob(class);
            let p = keep_prob;
            let adjacency_for = |keep_near: bool, keep_far: bool| -> Array2<f64> {
                let mut a = Array2::zeros((3, 3));
                if keep_near {
                    a[[near.0, near.1]] = 1.0;
                    a[[near.1, near.0]] = 1.0;
                }
                if keep_far {
                    a[[far.0, far.1]] = 1.0;
                    a[[far.1, far.0]] = 1.0;
                }
                a
            };
            let outcomes = [
                (1.0 - p, false, false),
                (p * (1.0 - p), true, false),
                (p * p, true, true),
            ];
            let mut expected = 0.0;
            for (prob, keep_near, keep_far) in outcomes {
                let a = adjacency_for(keep_near, keep_far);
                let f_kept = bb.predict(&a, ego.features(), ego.center()).unwrap().prob(class);
                let mut removed = 0.0;
                if !keep_near {
                    removed += score_of(near);
                }
                if !keep_far {
                    removed += score_of(far);
                }
                let term = removed - (f_full - f_kept);
                expected += prob * term * term;
            }
            let got = infidelity_exact(&bb, &ego, &scores, keep_prob).unwrap();
            worst_infid = worst_infid.max((got - expected).abs());
        }
    }
    let infid_ok = worst_infid < 1e-9;

    let elapsed = start.elapsed();
    let ok = auc_ok && infid_ok;
    verdict(
        9,
        ok,
        &format!(
            "auc gap {:.1e} over {} defined + {} undefined cases; \
             exact infidelity gap {:.1e} over 60 hand-enumerated egos in {:.1?}",
            worst_gap, compared, undefined, worst_infid, elapsed
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 10: byte-identical CLI runs
// ---------------------------------------------------------------------

const DETERMINISM_CONFIG: &str = r#"seed = 7
output_dir = "out"

[dataset]
kind = "tree-ba"

[dataset.synth]
tree_height = 4
motif_count = 6
noise_edges = 5

[blackbox]
kind = "rules"

[explain]
methods = ["relex-gumbel", "anchors", "random"]

[explain.relex]
num_samples = 60

[explain.relex.surrogate]
steps = 60

[explain.relex.mask]
iterations = 60

[explain.anchors]
budget = 500

[eval]
node_cap = 4
infidelity_samples = 30
"#;

fn run_cli(dir: &Path, args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_relex"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to launch the relex binary");
    assert!(
        output.status.success(),
        "relex {:?} failed with {:?}\nstdout: {}\nstderr: {}",
        args,
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

fn full_cli_run(dir: &Path) {
    std::fs::write(dir.join("run.toml"), DETERMINISM_CONFIG).unwrap();
    run_cli(dir, &["--config", "run.toml", "generate"]);
    run_cli(dir, &["--config", "run.toml", "train-blackbox"]);
    run_cli(dir, &["--config", "run.toml", "explain", "--nodes", "33,40"]);
    run_cli(dir, &["--config", "run.toml", "benchmark"]);
}

/// Every file under `dir`, keyed by relative path. `metadata.json` is
/// the one deliberately timestamped sidecar, so it is skipped.
fn collect_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                if rel != "metadata.json" {
                    out.insert(rel, std::fs::read(&path).unwrap());
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn criterion_10_cli_determinism() {
    let start = Instant::now();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();

    full_cli_run(dir_a.path());
    let first = collect_outputs(&dir_a.path().join("out"));

    // Same directory again: overwrites must reproduce every byte.
    full_cli_run(dir_a.path());
    let second = collect_outputs(&dir_a.path().join("out"));

    // Fresh directory: nothing may depend on where the run happened.
    // The echoed config embeds the output directory itself, so it is
    // compared only within a directory.
    full_cli_run(dir_b.path());
    let mut third = collect_outputs(&dir_b.path().join("out"));
    let mut first_data = first.clone();
    first_data.remove("config.toml");
    third.remove("config.toml");

    let same_dir_identical = first == second;
    let cross_dir_identical = first_data == third;
    let files = first.len();
    let ok = same_dir_identical && cross_dir_identical && files >= 8;
    verdict(
        10,
        ok,
        &format!(
            "{} output files byte-identical across repeat ({}) and relocated ({}) runs in {:.1?}",
            files,
            if same_dir_identical { "yes" } else { "NO" },
            if cross_dir_identical { "yes" } else { "NO" },
            start.elapsed()
        ),
    );
}
