mod common;

use common::{one_hot_collapse_error, random_case, Instance, TASKS};
use linknas::diagnostics::{random_thetas, weighted_sum};
use linknas::rng::{stream, Stream};
use linknas::supernet::{Choice, GraphBatch, Input, Selection, Supernet};
use linknas::tensor::Tape;
use proptest::prelude::*;
use rand::seq::SliceRandom;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_hot_selection_collapses_to_child(seed in any::<u64>()) {
        let err = one_hot_collapse_error(seed);
        prop_assert!(err <= 1e-12, "gap {err:e}");
    }

    #[test]
    fn message_order_is_irrelevant(seed in any::<u64>(), t in 0usize..4) {
        let task = TASKS[t];
        let mut rng = stream(seed, Stream::Split);
        let (spec, inst) = random_case(task, &mut rng);
        let net = Supernet::new(spec, &mut stream(seed, Stream::Init)).unwrap();
        let sel = Selection::uniform(net.slots());
        let base = net.evaluate(&sel, inst.input()).unwrap();
        if let Instance::Graph(b) = &inst {
            // rebuild from the same undirected edges in shuffled order
            let mut edges: Vec<(usize, usize)> = b.src.iter().zip(&b.dst).map(|(&s, &d)| (s, d)).collect();
            edges.shuffle(&mut rng);
            let shuffled = GraphBatch::new(b.features.clone(), &edges, b.graph_index.clone(), b.pairs.clone()).unwrap();
            prop_assert_eq!(net.evaluate(&sel, Input::Graph(&shuffled)).unwrap(), base);
        }
    }
}

#[test]
fn relaxed_gradients_reach_every_parameter_and_theta() {
    for (s, task) in TASKS.into_iter().enumerate() {
        let mut rng = stream(s as u64 + 11, Stream::Split);
        let (spec, inst) = random_case(task, &mut rng);
        let net = Supernet::new(spec, &mut stream(s as u64, Stream::Init)).unwrap();
        let thetas = random_thetas(&net, &mut rng);
        let mut tape = Tape::new();
        let bound = net.params().bind(&mut tape);
        let theta_vars: Vec<_> = thetas.iter().map(|t| tape.param(t.clone())).collect();
        let choices: Vec<Choice> = theta_vars.iter().map(|&v| Choice::Mixed(v)).collect();
        let y = net.forward(&mut tape, &bound, &choices, inst.input(), None).unwrap();
        let loss = weighted_sum(&mut tape, y).unwrap();
        let mut grads = tape.backward(loss).unwrap();
        for (name, g) in net.params().names().iter().zip(bound.gradients(&mut grads)) {
            assert!(g.is_some(), "{task}: no gradient reaches {name}");
        }
        let mut any_theta = false;
        for (slot, v) in net.slots().iter().zip(&theta_vars) {
            let g = grads.take(*v).unwrap_or_else(|| panic!("{task}: no gradient for theta of {}", slot.id));
            any_theta |= g.data().iter().any(|&x| x != 0.0);
        }
        assert!(any_theta, "{task}: all theta gradients vanish");
    }
}

#[test]
fn derived_child_keeps_only_its_weights() {
    let mut rng = stream(3, Stream::Split);
    let (spec, _) = random_case(TASKS[3], &mut rng);
    let net = Supernet::new(spec.clone(), &mut stream(3, Stream::Init)).unwrap();
    let idx = vec![0; net.slots().len()];
    let arch = linknas::supernet::DerivedArchitecture::from_indices(
        spec.task,
        spec.layers,
        spec.dim,
        &spec.ablations,
        net.slots(),
        &idx,
    )
    .unwrap();
    let derived = net.derive_child(&arch).unwrap();
    let fresh = Supernet::child(spec, &arch, &mut stream(9, Stream::RetrainInit)).unwrap();
    assert_eq!(derived.params().names(), fresh.params().names());
    assert!(derived.params().len() < net.params().len());
}
