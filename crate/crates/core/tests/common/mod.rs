#![allow(dead_code)]

use linknas::graph::{RelGraph, Triple};
use linknas::supernet::{Ablation, Ablations, GraphBatch, Input, NetSpec, TaskKind};
use linknas::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A random forward-pass instance for any task.
pub enum Instance {
    Graph(GraphBatch),
    Kg(RelGraph, Vec<(usize, usize)>),
}

impl Instance {
    pub fn input(&self) -> Input<'_> {
        match self {
            Instance::Graph(b) => Input::Graph(b),
            Instance::Kg(g, q) => Input::Kg {
                triples: g.augmented(),
                queries: q,
            },
        }
    }
}

pub const TASKS: [TaskKind; 4] = [
    TaskKind::LpHomogeneous,
    TaskKind::LpKg,
    TaskKind::NodeClassification,
    TaskKind::GraphClassification,
];

fn random_edges(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    // a path keeps every node connected, plus random chords
    let mut e: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    for _ in 0..n {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            e.push((a, b));
        }
    }
    e
}

fn random_features(n: usize, f: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::matrix(n, f, (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Random spec (task, width, depth, network-shaping ablations) and a matching instance.
pub fn random_case(task: TaskKind, rng: &mut ChaCha8Rng) -> (NetSpec, Instance) {
    let flags: Vec<Ablation> = [
        Ablation::IntraOnly,
        Ablation::DiffPool,
        Ablation::SharedDelta,
        Ablation::SharedLambda,
        Ablation::NoEdgeEmbedding,
    ]
    .into_iter()
    .filter(|a| Ablations::from_flags(&[*a]).validate_for(task).is_ok() && rng.random_bool(0.3))
    .collect();
    let n = rng.random_range(4..10);
    let input_dim = rng.random_range(1..4);
    let mut spec = NetSpec {
        task,
        input_dim,
        dim: rng.random_range(2..6),
        layers: rng.random_range(1..4),
        classes: rng.random_range(2..4),
        dropout: 0.0,
        ablations: Ablations::from_flags(&flags),
        entities: 0,
        relations: 0,
    };
    let edges = random_edges(n, rng);
    let instance = match task {
        TaskKind::LpKg => {
            let r = rng.random_range(1..4);
            spec.input_dim = 0;
            spec.classes = 0;
            spec.entities = n;
            spec.relations = r;
            let triples: Vec<Triple> = edges
                .iter()
                .map(|&(h, t)| Triple {
                    head: h,
                    relation: rng.random_range(0..r),
                    tail: t,
                })
                .collect();
            let queries = (0..3).map(|_| (rng.random_range(0..n), rng.random_range(0..2 * r))).collect();
            Instance::Kg(RelGraph::new(n, r, triples).unwrap(), queries)
        }
        TaskKind::LpHomogeneous => {
            spec.classes = 1;
            let pairs = vec![(0, n - 1), (1, 2), (n - 1, 1)];
            Instance::Graph(GraphBatch::new(random_features(n, input_dim, rng), &edges, vec![0; n], pairs).unwrap())
        }
        TaskKind::NodeClassification => {
            Instance::Graph(GraphBatch::new(random_features(n, input_dim, rng), &edges, vec![0; n], vec![]).unwrap())
        }
        TaskKind::GraphClassification => {
            // two graphs in one batch: nodes split at the midpoint, edges kept within halves
            let mid = n / 2;
            let index: Vec<usize> = (0..n).map(|i| usize::from(i >= mid)).collect();
            let within: Vec<(usize, usize)> = edges.into_iter().filter(|&(a, b)| index[a] == index[b]).collect();
            Instance::Graph(GraphBatch::new(random_features(n, input_dim, rng), &within, index, vec![]).unwrap())
        }
    };
    (spec, instance)
}

/// Largest gap between the supernet under a one-hot relaxed (and a derived)
/// selection and an independently built child carrying the same weights.
pub fn one_hot_collapse_error(seed: u64) -> f64 {
    use linknas::rng::{stream, Stream};
    use linknas::supernet::{DerivedArchitecture, Selection, SelectionMode, Supernet};

    let mut rng = stream(seed, Stream::Split);
    let task = TASKS[rng.random_range(0..4)];
    let (spec, inst) = random_case(task, &mut rng);
    let net = Supernet::new(spec.clone(), &mut stream(seed, Stream::Init)).unwrap();
    let idx: Vec<usize> = net.slots().iter().map(|s| rng.random_range(0..s.len())).collect();
    let arch =
        DerivedArchitecture::from_indices(spec.task, spec.layers, spec.dim, &spec.ablations, net.slots(), &idx).unwrap();

    let mut child = Supernet::child(spec, &arch, &mut stream(seed ^ 0xdead, Stream::RetrainInit)).unwrap();
    let copied = child.params_mut().copy_shared_from(net.params()).unwrap();
    assert_eq!(copied, child.params().len(), "child parameter missing from the supernet");

    let relaxed = Selection::one_hot(net.slots(), &idx, SelectionMode::Relaxed).unwrap();
    let derived = Selection::one_hot(net.slots(), &idx, SelectionMode::Derived).unwrap();
    let pure = Selection::one_hot(child.slots(), &vec![0; child.slots().len()], SelectionMode::Derived).unwrap();
    let want = child.evaluate(&pure, inst.input()).unwrap();
    let a = net.evaluate(&relaxed, inst.input()).unwrap();
    let b = net.evaluate(&derived, inst.input()).unwrap();
    assert_eq!(a.shape(), want.shape());
    a.max_abs_diff(&want).max(b.max_abs_diff(&want))
}

/// Two dense communities joined by one bridge; labels are the community and
/// features a noisy copy of it, so the task is separable.
pub fn two_communities(per_side: usize, seed: u64) -> linknas::graph::Graph {
    use linknas::graph::Graph;
    use linknas::rng::{stream, Stream};

    let mut rng = stream(seed, Stream::Split);
    let n = 2 * per_side;
    let mut edges = Vec::new();
    for side in 0..2 {
        let base = side * per_side;
        for i in 0..per_side {
            for j in i + 1..per_side {
                if rng.random_bool(0.5) || j == i + 1 {
                    edges.push((base + i, base + j));
                }
            }
        }
    }
    edges.push((0, per_side));
    let labels: Vec<usize> = (0..n).map(|i| i / per_side).collect();
    let feats: Vec<f64> = labels
        .iter()
        .flat_map(|&l| [l as f64 + rng.random_range(-0.2..0.2), 1.0 - l as f64 + rng.random_range(-0.2..0.2)])
        .collect();
    Graph::from_edges(n, edges)
        .unwrap()
        .with_features(Tensor::matrix(n, 2, feats).unwrap())
        .unwrap()
        .with_labels(labels)
        .unwrap()
}

/// Defaults for `task` shrunk to test size.
pub fn small_config(task: TaskKind) -> linknas::config::RunConfig {
    let mut cfg = linknas::config::RunConfig::defaults(task, "synthetic").unwrap();
    cfg.dim = 8;
    cfg.layers = 2;
    cfg.lr = 0.01;
    cfg.batch_size = 8;
    cfg.dropout = 0.0;
    cfg.search_epochs = 5;
    cfg.retrain_epochs = 20;
    cfg.patience = 20;
    cfg.seeds = vec![0];
    cfg
}

/// `count` distinct random triples over `entities` and `relations`.
pub fn random_triples(count: usize, entities: usize, relations: usize, seed: u64) -> Vec<Triple> {
    use linknas::rng::{stream, Stream};
    use std::collections::BTreeSet;

    let mut rng = stream(seed, Stream::Split);
    let mut seen = BTreeSet::new();
    while seen.len() < count {
        let (h, t) = (rng.random_range(0..entities), rng.random_range(0..entities));
        if h != t {
            seen.insert((h, rng.random_range(0..relations), t));
        }
    }
    seen.into_iter()
        .map(|(head, relation, tail)| Triple { head, relation, tail })
        .collect()
}

/// Trains on `triples` and ranks the same triples: filtered metrics of a memorization run.
pub fn kg_memorization(triples: Vec<Triple>, entities: usize, relations: usize) -> std::collections::BTreeMap<String, f64> {
    use linknas::graph::KgDataset;

    let data = KgDataset::from_parts(entities, relations, triples.clone(), triples.clone(), triples).unwrap();
    let mut cfg = linknas::config::RunConfig::defaults(TaskKind::LpKg, "memo").unwrap();
    cfg.dim = 32;
    cfg.lr = 0.01;
    cfg.search_epochs = 30;
    cfg.retrain_epochs = 300;
    cfg.patience = 50;
    linknas::tasks::run_lp_kg(&data, &cfg, 0).unwrap().metrics
}
