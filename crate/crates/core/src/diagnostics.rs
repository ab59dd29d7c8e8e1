//! Finite-difference gradient suite over every differentiable operation and
//! small relaxed supernets.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{RelGraph, Triple};
use crate::rng::{stream, Stream};
use crate::supernet::{Ablations, Choice, GraphBatch, Input, NetSpec, Supernet, TaskKind};
use crate::tensor::{grad_check, SegmentReduce, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_err: f64,
}

pub fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

/// Entries at least `gap` away from zero, for kinked functions.
fn away_from_zero(shape: &[usize], gap: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = rand_tensor(shape, rng);
    for v in t.data_mut() {
        *v = v.signum() * (gap + v.abs());
    }
    t
}

fn positive(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = rand_tensor(shape, rng);
    for v in t.data_mut() {
        *v = 0.5 + v.abs();
    }
    t
}

/// Rows separated by `step` so maxima are unique.
fn ranked_rows(shape: &[usize], step: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = rand_tensor(shape, rng);
    let c = shape[1];
    for (i, v) in t.data_mut().iter_mut().enumerate() {
        *v = v.abs() * 0.5 * step + (i / c) as f64 * step;
    }
    t
}

/// Scalar `Σ w_i x_i` with fixed, distinct weights so every coordinate of
/// `x` gets its own gradient.
pub fn weighted_sum(t: &mut Tape, x: Var) -> Result<Var> {
    let shape = t.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| (1.3 * i as f64 + 0.7).sin()).collect())?;
    let w = t.constant(w);
    let p = t.mul(x, w)?;
    t.sum(p, None)
}

type OpFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

/// `(name, inputs, scalar function)` for every differentiable operation kind.
pub fn op_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<Tensor>, OpFn)> {
    let (r, c, k) = (3, 4, 2);
    let mask: Vec<f64> = (0..r * c).map(|i| if i % 3 == 0 { 0.0 } else { 1.5 }).collect();
    let targets: Vec<f64> = (0..r * c).map(|_| rng.random_range(0.0..1.0)).collect();
    let base = rand_tensor(&[r, c], rng);
    let mut shifted = base.clone();
    for (i, v) in shifted.data_mut().iter_mut().enumerate() {
        *v += if i % 2 == 0 { 0.3 } else { -0.3 };
    }
    let mut cases: Vec<(&'static str, Vec<Tensor>, OpFn)> = Vec::new();
    macro_rules! case {
        ($name:expr, $inputs:expr, |$t:ident, $x:ident| $body:expr) => {
            cases.push(($name, $inputs, Box::new(move |$t: &mut Tape, $x: &[Var]| $body)));
        };
    }
    case!("matmul", vec![rand_tensor(&[r, c], rng), rand_tensor(&[c, k], rng)], |t, x| {
        let y = t.matmul(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("matmul_t", vec![rand_tensor(&[r, c], rng), rand_tensor(&[k, c], rng)], |t, x| {
        let y = t.matmul_t(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("add", vec![rand_tensor(&[r, c], rng), rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.add(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("sub", vec![rand_tensor(&[r, c], rng), rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.sub(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("mul", vec![rand_tensor(&[r, c], rng), rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.mul(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("maximum", vec![base, shifted], |t, x| {
        let y = t.maximum(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("add_row", vec![rand_tensor(&[r, c], rng), rand_tensor(&[c], rng)], |t, x| {
        let y = t.add_row(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("scale", vec![rand_tensor(&[r, c], rng), Tensor::scalar(0.6)], |t, x| {
        let y = t.scale(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("scale_const", vec![rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.scale_const(x[0], -1.7)?;
        weighted_sum(t, y)
    });
    case!("circ_corr", vec![rand_tensor(&[8], rng), rand_tensor(&[8], rng)], |t, x| {
        let y = t.circ_corr(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("circ_corr_rows", vec![rand_tensor(&[r, c], rng), rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.circ_corr(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("concat", vec![rand_tensor(&[r, c], rng), rand_tensor(&[r, k], rng)], |t, x| {
        let y = t.concat(&[x[0], x[1]], 1)?;
        weighted_sum(t, y)
    });
    case!("abs", vec![away_from_zero(&[r, c], 0.1, rng)], |t, x| {
        let y = t.abs(x[0])?;
        weighted_sum(t, y)
    });
    case!("sum", vec![rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.sum(x[0], Some(0))?;
        weighted_sum(t, y)
    });
    case!("mean", vec![rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.mean(x[0], Some(1))?;
        weighted_sum(t, y)
    });
    case!("max_axis", vec![ranked_rows(&[r, c], 0.5, rng)], |t, x| {
        let y = t.max_axis(x[0], 0)?;
        weighted_sum(t, y)
    });
    case!("softmax", vec![rand_tensor(&[6], rng)], |t, x| {
        let y = t.softmax(x[0])?;
        weighted_sum(t, y)
    });
    case!("log", vec![positive(&[r, c], rng)], |t, x| {
        let y = t.log(x[0])?;
        weighted_sum(t, y)
    });
    case!("exp", vec![rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.exp(x[0])?;
        weighted_sum(t, y)
    });
    case!("sigmoid", vec![rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.sigmoid(x[0])?;
        weighted_sum(t, y)
    });
    case!("tanh", vec![rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.tanh(x[0])?;
        weighted_sum(t, y)
    });
    case!("relu", vec![away_from_zero(&[r, c], 0.1, rng)], |t, x| {
        let y = t.relu(x[0])?;
        weighted_sum(t, y)
    });
    case!("prelu", vec![away_from_zero(&[r, c], 0.1, rng), Tensor::scalar(0.25)], |t, x| {
        let y = t.prelu(x[0], x[1])?;
        weighted_sum(t, y)
    });
    case!("dropout", vec![rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.dropout_with_mask(x[0], mask.clone())?;
        weighted_sum(t, y)
    });
    case!("bce_with_logits", vec![rand_tensor(&[r, c], rng)], |t, x| {
        t.bce_with_logits(x[0], &targets)
    });
    case!("cross_entropy", vec![rand_tensor(&[r, c], rng)], |t, x| {
        t.cross_entropy(x[0], &[1, 0, 3])
    });
    case!("gather_rows", vec![rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.gather_rows(x[0], &[2, 0, 2, 1, 0])?;
        weighted_sum(t, y)
    });
    case!("segment_sum", vec![rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.segment(x[0], &[1, 0, 1], 3, SegmentReduce::Sum)?;
        weighted_sum(t, y)
    });
    case!("segment_mean", vec![rand_tensor(&[r, c], rng)], |t, x| {
        let y = t.segment(x[0], &[1, 0, 1], 3, SegmentReduce::Mean)?;
        weighted_sum(t, y)
    });
    case!("segment_max", vec![ranked_rows(&[r, c], 1.0, rng)], |t, x| {
        let y = t.segment(x[0], &[1, 0, 1], 3, SegmentReduce::Max)?;
        weighted_sum(t, y)
    });
    case!("index", vec![rand_tensor(&[6], rng)], |t, x| {
        let y = t.index(x[0], 4)?;
        let z = t.mul(y, y)?;
        t.sum(z, None)
    });
    case!("mlp", vec![rand_tensor(&[r, c], rng), rand_tensor(&[c, k], rng), rand_tensor(&[k], rng), rand_tensor(&[k, 1], rng)], |t, x| {
        let h = t.matmul(x[0], x[1])?;
        let h = t.add_row(h, x[2])?;
        let h = t.tanh(h)?;
        let y = t.matmul(h, x[3])?;
        weighted_sum(t, y)
    });
    cases
}

/// Five-node homogeneous instance for node classification.
pub fn five_node_batch(rng: &mut ChaCha8Rng, input_dim: usize) -> Result<GraphBatch> {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)];
    GraphBatch::new(rand_tensor(&[5, input_dim], rng), &edges, vec![0; 5], Vec::new())
}

/// Relaxed-supernet check: gradients with respect to every weight and every
/// slot's mixing vector `θ`.
pub fn supernet_check(net: &Supernet, input: Input<'_>, thetas: &[Tensor], eps: f64) -> Result<f64> {
    let mut inputs: Vec<Tensor> = net.params().values().to_vec();
    inputs.extend(thetas.iter().cloned());
    let np = net.params().len();
    grad_check(
        |t, x| {
            let bound = net.params().bind_vars(&x[..np])?;
            let choices: Vec<Choice> = x[np..].iter().map(|&v| Choice::Mixed(v)).collect();
            let y = net.forward(t, &bound, &choices, input, None)?;
            weighted_sum(t, y)
        },
        &inputs,
        eps,
    )
}

/// Random points of the simplex, one per slot.
pub fn random_thetas(net: &Supernet, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    net.slots()
        .iter()
        .map(|s| {
            let raw: Vec<f64> = (0..s.len()).map(|_| rng.random_range(0.2..1.0)).collect();
            let z: f64 = raw.iter().sum();
            Tensor::vector(raw.into_iter().map(|v| v / z).collect())
        })
        .collect()
}

fn spec(task: TaskKind, input_dim: usize, classes: usize, entities: usize, relations: usize) -> NetSpec {
    NetSpec {
        task,
        input_dim,
        dim: 4,
        layers: 2,
        classes,
        dropout: 0.0,
        ablations: Ablations::none(),
        entities,
        relations,
    }
}

/// Every operation kind plus relaxed supernets for each task on five-node
/// instances.
pub fn gradcheck_suite(seed: u64, eps: f64) -> Result<Vec<GradCheck>> {
    let mut rng = stream(seed, Stream::Init);
    let mut out = Vec::new();
    for (name, inputs, f) in op_cases(&mut rng) {
        out.push(GradCheck {
            name: name.to_string(),
            max_rel_err: grad_check(f, &inputs, eps)?,
        });
    }

    let nc = Supernet::new(spec(TaskKind::NodeClassification, 3, 2, 0, 0), &mut rng)?;
    let batch = five_node_batch(&mut rng, 3)?;
    let th = random_thetas(&nc, &mut rng);
    out.push(GradCheck {
        name: "supernet_nc".into(),
        max_rel_err: supernet_check(&nc, Input::Graph(&batch), &th, eps)?,
    });

    let gc = Supernet::new(spec(TaskKind::GraphClassification, 3, 2, 0, 0), &mut rng)?;
    let th = random_thetas(&gc, &mut rng);
    out.push(GradCheck {
        name: "supernet_gc".into(),
        max_rel_err: supernet_check(&gc, Input::Graph(&batch), &th, eps)?,
    });

    let lp = Supernet::new(spec(TaskKind::LpHomogeneous, 3, 1, 0, 0), &mut rng)?;
    let mut pair_batch = batch.clone();
    pair_batch.pairs = vec![(0, 4), (2, 1)];
    let th = random_thetas(&lp, &mut rng);
    out.push(GradCheck {
        name: "supernet_lp".into(),
        max_rel_err: supernet_check(&lp, Input::Graph(&pair_batch), &th, eps)?,
    });

    let kg = Supernet::new(spec(TaskKind::LpKg, 0, 0, 5, 2), &mut rng)?;
    let t = |h, r, t| Triple { head: h, relation: r, tail: t };
    let rel = RelGraph::new(5, 2, vec![t(0, 0, 1), t(1, 1, 2), t(2, 0, 3), t(3, 1, 4), t(4, 0, 0)])?;
    let th = random_thetas(&kg, &mut rng);
    let input = Input::Kg {
        triples: rel.augmented(),
        queries: &[(0, 0), (2, 3)],
    };
    out.push(GradCheck {
        name: "supernet_kg".into(),
        max_rel_err: supernet_check(&kg, input, &th, eps)?,
    });
    Ok(out)
}
