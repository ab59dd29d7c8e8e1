use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;

use super::metrics::{filtered_rank, mrr_hits};
use super::{fixed_selection, EvalSplit, Task};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::{KgDataset, RelGraph, Triple};
use crate::search::Objective;
use crate::supernet::{Bound, Choice, Input, NetSpec, Selection, Supernet, TaskKind};
use crate::tensor::{Tape, Var};

/// `(entity, augmented relation)` query and its answer.
type Query = ((usize, usize), usize);

/// Both query directions of a triple: `(h, r) → t` and `(t, r + R) → h`.
fn queries_of(t: &Triple, relations: usize) -> [Query; 2] {
    [
        ((t.head, t.relation), t.tail),
        ((t.tail, t.relation + relations), t.head),
    ]
}

/// Multi-relational link prediction with 1-N scoring and filtered ranking.
#[derive(Debug, Clone)]
pub struct KgTask {
    spec: NetSpec,
    graph: RelGraph,
    /// Distinct training queries with their sorted answer sets.
    train_queries: Vec<(usize, usize)>,
    train_answers: Vec<Vec<usize>>,
    /// Every known answer per query over all splits, for filtering.
    known: BTreeMap<(usize, usize), Vec<usize>>,
    valid: Vec<Query>,
    test: Vec<Query>,
    smoothing: f64,
    eval_batch: usize,
}

impl KgTask {
    pub fn new(data: &KgDataset, cfg: &RunConfig) -> Result<Self> {
        let r = data.graph.relation_count();
        let mut train: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for t in data.graph.triples() {
            for (q, a) in queries_of(t, r) {
                train.entry(q).or_default().insert(a);
            }
        }
        let mut known: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for t in data.all_triples() {
            for (q, a) in queries_of(t, r) {
                known.entry(q).or_default().insert(a);
            }
        }
        let expand = |ts: &[Triple]| ts.iter().flat_map(|t| queries_of(t, r)).collect::<Vec<_>>();
        let valid = expand(&data.valid);
        let test = expand(&data.test);
        if train.is_empty() || valid.is_empty() || test.is_empty() {
            return Err(Error::Split("knowledge graph needs train, valid and test triples".into()));
        }
        let spec = NetSpec {
            task: TaskKind::LpKg,
            input_dim: 0,
            dim: cfg.dim,
            layers: cfg.layers,
            classes: 0,
            dropout: cfg.dropout,
            ablations: cfg.ablation_set()?,
            entities: data.graph.entity_count(),
            relations: r,
        };
        let (train_queries, train_answers) = train.into_iter().map(|(q, a)| (q, a.into_iter().collect())).unzip();
        Ok(Self {
            spec,
            graph: data.graph.clone(),
            train_queries,
            train_answers,
            known: known.into_iter().map(|(q, a)| (q, a.into_iter().collect())).collect(),
            valid,
            test,
            smoothing: cfg.label_smoothing,
            eval_batch: cfg.eval_batch,
        })
    }

    /// Filtered ranks of the answers to `queries`.
    pub fn ranks(&self, net: &Supernet, selection: &Selection, queries: &[Query]) -> Result<Vec<usize>> {
        let mut ranks = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(self.eval_batch) {
            let qs: Vec<(usize, usize)> = chunk.iter().map(|c| c.0).collect();
            let scores = net.evaluate(
                selection,
                Input::Kg {
                    triples: self.graph.augmented(),
                    queries: &qs,
                },
            )?;
            for (row, &(q, answer)) in chunk.iter().enumerate() {
                let filter = self.known.get(&q).map_or(&[][..], |v| v.as_slice());
                ranks.push(filtered_rank(scores.row(row), answer, filter));
            }
        }
        Ok(ranks)
    }

    fn ranking_metrics(&self, net: &Supernet, selection: &Selection, queries: &[Query]) -> Result<BTreeMap<String, f64>> {
        mrr_hits(&self.ranks(net, selection, queries)?, &[1, 3, 10])
    }

    pub fn valid_queries(&self) -> &[Query] {
        &self.valid
    }

    pub fn test_queries(&self) -> &[Query] {
        &self.test
    }
}

impl Objective for KgTask {
    fn train_len(&self) -> usize {
        self.train_queries.len()
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
        let qs: Vec<(usize, usize)> = idx.iter().map(|&i| self.train_queries[i]).collect();
        let input = Input::Kg {
            triples: self.graph.augmented(),
            queries: &qs,
        };
        let logits = net.forward(tape, bound, choices, input, Some(dropout))?;
        let n = self.spec.entities;
        let off = self.smoothing / n as f64;
        let mut y = vec![off; idx.len() * n];
        for (row, &i) in idx.iter().enumerate() {
            for &a in &self.train_answers[i] {
                y[row * n + a] = (1.0 - self.smoothing) + off;
            }
        }
        tape.bce_with_logits(logits, &y)
    }

    fn validate(&self, net: &Supernet, selection: &Selection) -> Result<f64> {
        Ok(self.ranking_metrics(net, selection, &self.valid)?["mrr"])
    }
}

impl Task for KgTask {
    fn kind(&self) -> TaskKind {
        TaskKind::LpKg
    }

    fn net_spec(&self) -> NetSpec {
        self.spec.clone()
    }

    fn metrics(&self, net: &Supernet, split: EvalSplit) -> Result<BTreeMap<String, f64>> {
        let queries = match split {
            EvalSplit::Valid => &self.valid,
            EvalSplit::Test => &self.test,
        };
        self.ranking_metrics(net, &fixed_selection(net)?, queries)
    }
}
