//! The searchable message-passing network.
//!
//! Every design choice is a slot holding an ordered list of candidate
//! operators. A forward pass evaluates each slot either as a single fixed
//! candidate or as the `θ`-weighted sum of all candidates.

mod batch;
mod catalog;
mod model;
pub mod ops;
mod params;
mod selection;

pub use batch::GraphBatch;
pub use catalog::{build_catalogs, Ablation, Ablations, Candidate, SlotCatalog, SlotKind, SlotScope, TaskKind};
pub use model::{Input, NetSpec, Supernet};
pub use params::{Bound, ParamStore};
pub use selection::{argmax, Choice, DerivedArchitecture, Selection, SelectionMode};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AugmentedTriple, EdgeDirection};
    use crate::rng::{stream, Stream};
    use crate::tensor::{Tape, Tensor};

    fn spec(task: TaskKind, input_dim: usize, dim: usize, layers: usize, ablations: &[Ablation]) -> NetSpec {
        NetSpec {
            task,
            input_dim,
            dim,
            layers,
            classes: 2,
            dropout: 0.0,
            ablations: Ablations::from_flags(ablations),
            entities: 3,
            relations: 1,
        }
    }

    fn set(net: &mut Supernet, name: &str, t: Tensor) {
        *net.params_mut().get_mut(name).unwrap() = t;
    }

    fn embed_fixed(net: &Supernet, idx: &[usize], input: Input<'_>) -> Tensor {
        let mut tape = Tape::new();
        let bound = net.params().bind_frozen(&mut tape);
        let choices: Vec<Choice> = idx.iter().map(|&i| Choice::Fixed(i)).collect();
        let (h, _, _) = net.embed(&mut tape, &bound, &choices, input, None).unwrap();
        tape.value(h).clone()
    }

    #[test]
    fn isolated_node_keeps_own_signal() {
        let mut net = Supernet::new(
            spec(TaskKind::NodeClassification, 2, 2, 1, &[Ablation::IntraOnly]),
            &mut stream(0, Stream::Init),
        )
        .unwrap();
        for name in ["enc.w", "l0.w_self", "l0.w_neigh"] {
            set(&mut net, name, Tensor::identity(2));
        }
        let b = GraphBatch::new(Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap(), &[], vec![0], vec![]).unwrap();
        // agg=sum, com=sum, act=relu
        let h = embed_fixed(&net, &[0, 0, 0], Input::Graph(&b));
        assert_eq!(h.data(), &[1.0, 0.0]);
    }

    #[test]
    fn two_node_path_hand_evaluation() {
        let mut net = Supernet::new(
            spec(TaskKind::NodeClassification, 2, 2, 1, &[Ablation::IntraOnly]),
            &mut stream(0, Stream::Init),
        )
        .unwrap();
        for name in ["enc.w", "l0.w_self", "l0.w_neigh"] {
            set(&mut net, name, Tensor::identity(2));
        }
        let b = GraphBatch::new(Tensor::identity(2), &[(0, 1)], vec![0, 0], vec![]).unwrap();
        let h = embed_fixed(&net, &[0, 0, 0], Input::Graph(&b));
        assert_eq!(h.data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    fn kg_net(ablations: &[Ablation]) -> Supernet {
        let mut net = Supernet::new(spec(TaskKind::LpKg, 0, 2, 1, ablations), &mut stream(1, Stream::Init)).unwrap();
        let names: Vec<String> = net.params().names().iter().filter(|n| n.starts_with("l0.w")).cloned().collect();
        for n in names {
            set(&mut net, &n, Tensor::identity(2));
        }
        set(&mut net, "ent", Tensor::matrix(3, 2, vec![0.3, -0.1, 0.2, 0.4, -0.5, 0.1]).unwrap());
        net
    }

    #[test]
    fn kg_sub_message_with_identity_weights() {
        let mut net = kg_net(&[Ablation::IntraOnly]);
        set(&mut net, "rel", Tensor::matrix(3, 2, vec![0.05, 0.07, 0.0, 0.0, 0.0, 0.0]).unwrap());
        let triples = [AugmentedTriple { head: 0, relation: 0, tail: 1, direction: EdgeDirection::Original }];
        // phi=sub, agg=sum, com=sum, act=tanh
        let h = embed_fixed(&net, &[0, 0, 0, 0], Input::Kg { triples: &triples, queries: &[(0, 0)] });
        let expect = [(0.2f64 + 0.3 - 0.05).tanh(), (0.4f64 - 0.1 - 0.07).tanh()];
        assert!((h.row(1)[0] - expect[0]).abs() < 1e-15);
        assert!((h.row(1)[1] - expect[1]).abs() < 1e-15);
    }

    #[test]
    fn kg_direction_tag_changes_message() {
        let mut net = kg_net(&[Ablation::IntraOnly]);
        set(&mut net, "l0.w_i", Tensor::matrix(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap());
        let mk = |direction| [AugmentedTriple { head: 0, relation: 0, tail: 1, direction }];
        let a = embed_fixed(&net, &[0, 0, 0, 0], Input::Kg { triples: &mk(EdgeDirection::Original), queries: &[(0, 0)] });
        let b = embed_fixed(&net, &[0, 0, 0, 0], Input::Kg { triples: &mk(EdgeDirection::Inverse), queries: &[(0, 0)] });
        assert_ne!(a.row(1), b.row(1));
        assert_eq!(a.row(0), b.row(0));
    }

    #[test]
    fn shared_delta_matches_equal_matrices() {
        let d = 3;
        let w = glorot(d, 7);
        let mut shared = Supernet::new(
            spec(TaskKind::NodeClassification, 2, d, 2, &[Ablation::SharedDelta]),
            &mut stream(2, Stream::Init),
        )
        .unwrap();
        let mut plain = Supernet::new(spec(TaskKind::NodeClassification, 2, d, 2, &[]), &mut stream(2, Stream::Init)).unwrap();
        for k in 0..2 {
            set(&mut shared, &format!("l{k}.w"), w.clone());
            set(&mut plain, &format!("l{k}.w_self"), w.clone());
            set(&mut plain, &format!("l{k}.w_neigh"), w.clone());
        }
        // carry over every other parameter
        let src = shared.params().clone();
        plain.params_mut().copy_shared_from(&src).unwrap();
        let b = GraphBatch::new(
            Tensor::matrix(4, 2, vec![1.0, 0.0, 0.5, -1.0, 0.0, 2.0, 1.0, 1.0]).unwrap(),
            &[(0, 1), (1, 2), (2, 3), (0, 3)],
            vec![0; 4],
            vec![],
        )
        .unwrap();
        let sel = Selection::uniform(shared.slots());
        assert_eq!(
            shared.evaluate(&sel, Input::Graph(&b)).unwrap(),
            plain.evaluate(&sel, Input::Graph(&b)).unwrap()
        );
    }

    fn glorot(d: usize, seed: u64) -> Tensor {
        crate::tensor::glorot_uniform(d, d, &mut stream(seed, Stream::Init))
    }

    #[test]
    fn no_edge_embedding_ignores_relation_table() {
        let net = Supernet::new(
            spec(TaskKind::LpKg, 0, 4, 2, &[Ablation::NoEdgeEmbedding]),
            &mut stream(3, Stream::Init),
        )
        .unwrap();
        assert!(net.params().get("rel").is_none());
        assert!(net.slots().iter().all(|s| s.kind != SlotKind::Compose));
        let mk = |r: usize| {
            [
                AugmentedTriple { head: 0, relation: r, tail: 1, direction: EdgeDirection::Original },
                AugmentedTriple { head: 1, relation: r + 1, tail: 0, direction: EdgeDirection::Inverse },
            ]
        };
        let sel = Selection::uniform(net.slots());
        let emb = |triples: &[AugmentedTriple]| {
            let mut tape = Tape::new();
            let bound = net.params().bind_frozen(&mut tape);
            let ch = sel.choices(&mut tape);
            let (h, _, _) = net.embed(&mut tape, &bound, &ch, Input::Kg { triples, queries: &[(0, 0)] }, None).unwrap();
            tape.value(h).clone()
        };
        // relation ids only matter through the edge-embedding table, which is gone
        assert_eq!(emb(&mk(0)), emb(&mk(1)));
    }

    #[test]
    fn relaxed_half_half_is_mean_of_pure_forwards() {
        let net = Supernet::new(spec(TaskKind::GraphClassification, 3, 4, 2, &[]), &mut stream(4, Stream::Init)).unwrap();
        let b = GraphBatch::new(
            Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap(),
            &[(0, 1), (1, 2), (1, 3)],
            vec![0; 4],
            vec![],
        )
        .unwrap();
        let base: Vec<Vec<f64>> = net
            .slots()
            .iter()
            .map(|s| {
                let mut t = vec![0.0; s.len()];
                t[s.len() - 1] = 1.0;
                t
            })
            .collect();
        // first aggregation slot: (sum, mean, max)
        let agg = net.slots().iter().position(|s| s.kind == SlotKind::Aggregate).unwrap();
        let with = |t: Vec<f64>| -> Tensor {
            let mut theta = base.clone();
            theta[agg] = t;
            let sel = Selection::new(SelectionMode::Relaxed, theta).unwrap();
            net.evaluate(&sel, Input::Graph(&b)).unwrap()
        };
        // end to end the pure forwards differ, so the mixture is exercised
        assert_ne!(with(vec![1.0, 0.0, 0.0]), with(vec![0.0, 0.0, 1.0]));
        // the mixture is linear at the slot itself
        let at_slot = |t: Vec<f64>| {
            let mut theta = base.clone();
            theta[agg] = t;
            let sel = Selection::new(SelectionMode::Relaxed, theta).unwrap();
            let mut tape = Tape::new();
            let bound = net.params().bind_frozen(&mut tape);
            let ch = sel.choices(&mut tape);
            let enc = tape.constant(b.features.clone());
            let x = tape.matmul(enc, bound.var("enc.w").unwrap()).unwrap();
            let nb = tape.matmul(x, bound.var("l0.w_neigh").unwrap()).unwrap();
            let msgs = tape.gather_rows(nb, &b.src).unwrap();
            let slot = &net.slots()[agg];
            let Choice::Mixed(th) = ch[agg] else { unreachable!() };
            let mut acc = None;
            for (i, &c) in slot.candidates.iter().enumerate() {
                let o = ops::aggregate(&mut tape, c, Some(msgs), &b.dst, 4, 4).unwrap();
                let w = tape.index(th, i).unwrap();
                let term = tape.scale(o, w).unwrap();
                acc = Some(match acc {
                    None => term,
                    Some(a) => tape.add(a, term).unwrap(),
                });
            }
            tape.value(acc.unwrap()).clone()
        };
        let (s, m, h) = (
            at_slot(vec![1.0, 0.0, 0.0]),
            at_slot(vec![0.0, 0.0, 1.0]),
            at_slot(vec![0.5, 0.0, 0.5]),
        );
        for i in 0..h.numel() {
            assert!((h.data()[i] - 0.5 * (s.data()[i] + m.data()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_order_does_not_change_output() {
        let net = Supernet::new(spec(TaskKind::NodeClassification, 2, 3, 2, &[]), &mut stream(5, Stream::Init)).unwrap();
        let feats = Tensor::matrix(4, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8]).unwrap();
        let e1 = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)];
        let e2 = [(2, 0), (0, 3), (3, 2), (2, 1), (1, 0)];
        let b1 = GraphBatch::new(feats.clone(), &e1, vec![0; 4], vec![]).unwrap();
        let b2 = GraphBatch::new(feats, &e2, vec![0; 4], vec![]).unwrap();
        let sel = Selection::uniform(net.slots());
        assert_eq!(net.evaluate(&sel, Input::Graph(&b1)).unwrap(), net.evaluate(&sel, Input::Graph(&b2)).unwrap());
    }

    #[test]
    fn choice_mismatch_is_contract_error() {
        let net = Supernet::new(spec(TaskKind::NodeClassification, 2, 3, 1, &[]), &mut stream(6, Stream::Init)).unwrap();
        let b = GraphBatch::new(Tensor::zeros(&[2, 2]), &[(0, 1)], vec![0, 0], vec![]).unwrap();
        let sel = Selection::new(SelectionMode::Relaxed, vec![vec![1.0]]).unwrap();
        assert!(matches!(net.evaluate(&sel, Input::Graph(&b)), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn single_candidate_network_ignores_theta() {
        let sup = Supernet::new(spec(TaskKind::NodeClassification, 2, 3, 2, &[]), &mut stream(7, Stream::Init)).unwrap();
        let idx: Vec<usize> = sup.slots().iter().map(|s| s.len() - 1).collect();
        let arch = DerivedArchitecture::from_indices(TaskKind::NodeClassification, 2, 3, &Ablations::none(), sup.slots(), &idx).unwrap();
        let child = sup.derive_child(&arch).unwrap();
        let b = GraphBatch::new(
            Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap(),
            &[(0, 1), (1, 2)],
            vec![0; 3],
            vec![],
        )
        .unwrap();
        let ones: Vec<usize> = vec![0; child.slots().len()];
        let s1 = Selection::one_hot(child.slots(), &ones, SelectionMode::Derived).unwrap();
        let s2 = Selection::uniform(child.slots());
        assert_eq!(child.evaluate(&s1, Input::Graph(&b)).unwrap(), child.evaluate(&s2, Input::Graph(&b)).unwrap());
    }
}
