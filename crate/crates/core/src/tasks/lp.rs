use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use super::baseline::common_neighbors;
use super::metrics::auc;
use super::{fixed_selection, EvalSplit, Task};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::{distance_encode, extract_enclosing_subgraph, split_links, EnclosingSubgraph, Graph, LinkSplit};
use crate::search::Objective;
use crate::supernet::{Bound, Choice, GraphBatch, Input, NetSpec, Selection, Supernet, TaskKind};
use crate::tensor::{Tape, Tensor, Var};

/// Labelled target links with their enclosing subgraphs and distance encodings.
#[derive(Debug, Clone)]
pub struct LinkExamples {
    pub links: Vec<(usize, usize)>,
    pub subgraphs: Vec<EnclosingSubgraph>,
    pub features: Vec<Tensor>,
    pub labels: Vec<f64>,
}

impl LinkExamples {
    /// Positives first, then negatives. Subgraphs come from `graph`, which
    /// should not contain held-out positives.
    pub fn build(graph: &Graph, pos: &[(usize, usize)], neg: &[(usize, usize)], hops: usize, dmax: usize) -> Result<Self> {
        let mut out = Self {
            links: Vec::with_capacity(pos.len() + neg.len()),
            subgraphs: Vec::with_capacity(pos.len() + neg.len()),
            features: Vec::with_capacity(pos.len() + neg.len()),
            labels: Vec::with_capacity(pos.len() + neg.len()),
        };
        for (links, label) in [(pos, 1.0), (neg, 0.0)] {
            for &pair in links {
                let sub = extract_enclosing_subgraph(graph, pair, hops)?;
                out.features.push(distance_encode(&sub, dmax)?);
                out.subgraphs.push(sub);
                out.links.push(pair);
                out.labels.push(label);
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> Result<GraphBatch> {
        let items: Vec<_> = idx.iter().map(|&i| (&self.subgraphs[i], &self.features[i])).collect();
        GraphBatch::from_subgraphs(&items)
    }

    fn split_scores(&self, scores: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (&s, &y) in scores.iter().zip(&self.labels) {
            if y > 0.5 {
                pos.push(s)
            } else {
                neg.push(s)
            }
        }
        (pos, neg)
    }
}

/// Link prediction on a homogeneous graph via enclosing subgraphs.
#[derive(Debug, Clone)]
pub struct LinkTask {
    spec: NetSpec,
    train_graph: Graph,
    pub train: LinkExamples,
    pub valid: LinkExamples,
    pub test: LinkExamples,
    eval_batch: usize,
}

/// Fails if any held-out positive is an edge of `train_graph`.
pub fn check_no_leakage(train_graph: &Graph, split: &LinkSplit) -> Result<()> {
    if let Some(&(u, v)) = split
        .valid_pos
        .iter()
        .chain(&split.test_pos)
        .find(|&&(u, v)| train_graph.has_edge(u, v))
    {
        return Err(Error::Contract(format!("held-out link ({u}, {v}) visible in the training graph")));
    }
    Ok(())
}

impl LinkTask {
    /// 80/10/10 split of `graph`'s links with equal negatives, subgraphs taken
    /// from the training graph.
    pub fn new(graph: &Graph, cfg: &RunConfig, seed: u64) -> Result<Self> {
        let split = split_links(graph, (0.8, 0.1, 0.1), seed)?;
        let train_graph = split.training_graph(graph)?;
        check_no_leakage(&train_graph, &split)?;
        let (h, d) = (cfg.hops, cfg.dmax);
        let train = LinkExamples::build(&train_graph, &split.train_pos, &split.train_neg, h, d)?;
        let valid = LinkExamples::build(&train_graph, &split.valid_pos, &split.valid_neg, h, d)?;
        let test = LinkExamples::build(&train_graph, &split.test_pos, &split.test_neg, h, d)?;
        log::info!(
            "link split: {} train, {} valid, {} test examples; training graph has {} edges",
            train.len(),
            valid.len(),
            test.len(),
            train_graph.edge_count()
        );
        Self::from_examples(train_graph, train, valid, test, cfg)
    }

    /// Explicit examples; leakage is the caller's responsibility.
    pub fn from_examples(
        train_graph: Graph,
        train: LinkExamples,
        valid: LinkExamples,
        test: LinkExamples,
        cfg: &RunConfig,
    ) -> Result<Self> {
        if train.is_empty() || valid.is_empty() || test.is_empty() {
            return Err(Error::Split("link task needs train, valid and test examples".into()));
        }
        let spec = NetSpec {
            task: TaskKind::LpHomogeneous,
            input_dim: 2 * (cfg.dmax + 1),
            dim: cfg.dim,
            layers: cfg.layers,
            classes: 1,
            dropout: cfg.dropout,
            ablations: cfg.ablation_set()?,
            entities: 0,
            relations: 0,
        };
        Ok(Self {
            spec,
            train_graph,
            train,
            valid,
            test,
            eval_batch: cfg.eval_batch,
        })
    }

    pub fn train_graph(&self) -> &Graph {
        &self.train_graph
    }

    /// Link logits for every example, evaluated in chunks.
    pub fn scores(&self, net: &Supernet, selection: &Selection, ex: &LinkExamples) -> Result<Vec<f64>> {
        let idx: Vec<usize> = (0..ex.len()).collect();
        let mut out = Vec::with_capacity(ex.len());
        for chunk in idx.chunks(self.eval_batch) {
            let b = ex.batch(chunk)?;
            out.extend_from_slice(net.evaluate(selection, Input::Graph(&b))?.data());
        }
        Ok(out)
    }

    pub fn auc_on(&self, net: &Supernet, selection: &Selection, ex: &LinkExamples) -> Result<f64> {
        let s = self.scores(net, selection, ex)?;
        let (pos, neg) = ex.split_scores(&s);
        auc(&pos, &neg)
    }

    /// Common-neighbours AUC on `ex`, scored on the training graph.
    pub fn common_neighbors_auc(&self, ex: &LinkExamples) -> Result<f64> {
        let s = common_neighbors(&self.train_graph, &ex.links)?;
        let (pos, neg) = ex.split_scores(&s);
        auc(&pos, &neg)
    }
}

impl Objective for LinkTask {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn batch_loss(
        &self,
        net: &Supernet,
        tape: &mut Tape,
        bound: &Bound,
        choices: &[Choice],
        idx: &[usize],
        dropout: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let b = self.train.batch(idx)?;
        let logits = net.forward(tape, bound, choices, Input::Graph(&b), Some(dropout))?;
        let y: Vec<f64> = idx.iter().map(|&i| self.train.labels[i]).collect();
        tape.bce_with_logits(logits, &y)
    }

    fn validate(&self, net: &Supernet, selection: &Selection) -> Result<f64> {
        self.auc_on(net, selection, &self.valid)
    }
}

impl Task for LinkTask {
    fn kind(&self) -> TaskKind {
        TaskKind::LpHomogeneous
    }

    fn net_spec(&self) -> NetSpec {
        self.spec.clone()
    }

    fn metrics(&self, net: &Supernet, split: EvalSplit) -> Result<BTreeMap<String, f64>> {
        let sel = fixed_selection(net)?;
        let ex = match split {
            EvalSplit::Valid => &self.valid,
            EvalSplit::Test => &self.test,
        };
        Ok(BTreeMap::from([
            ("auc".to_string(), self.auc_on(net, &sel, ex)?),
            ("cn_auc".to_string(), self.common_neighbors_auc(ex)?),
        ]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::canonical;

    fn ring_with_chords(n: usize) -> Graph {
        let mut e: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        e.extend((0..n).map(|i| (i, (i + 2) % n)));
        Graph::from_edges(n, e).unwrap()
    }

    #[test]
    fn split_keeps_held_out_links_out_of_subgraphs() {
        let g = ring_with_chords(40);
        let cfg = RunConfig::defaults(TaskKind::LpHomogeneous, "ring").unwrap();
        let t = LinkTask::new(&g, &cfg, 5).unwrap();
        assert_eq!(t.train.len(), 2 * 64);
        assert_eq!((t.valid.len(), t.test.len()), (16, 16));
        for ex in [&t.valid, &t.test] {
            for (i, sub) in ex.subgraphs.iter().enumerate() {
                let (u, v) = (sub.target.0, sub.target.1);
                assert!(!sub.edges.contains(&canonical(u, v)));
                if ex.labels[i] > 0.5 {
                    assert!(!t.train_graph().has_edge(ex.links[i].0, ex.links[i].1));
                }
            }
        }
    }

    #[test]
    fn leakage_guard_fires() {
        let g = ring_with_chords(20);
        let split = split_links(&g, (0.8, 0.1, 0.1), 1).unwrap();
        assert!(check_no_leakage(&split.training_graph(&g).unwrap(), &split).is_ok());
        assert!(check_no_leakage(&g, &split).is_err());
    }
}
