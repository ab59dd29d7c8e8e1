use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use super::metrics::accuracy;
use super::{fixed_selection, predict_classes, split_indices, EvalSplit, Task};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::search::Objective;
use crate::supernet::{Bound, Choice, GraphBatch, Input, NetSpec, Selection, Supernet, TaskKind};
use crate::tensor::{Tape, Tensor, Var};

/// Transductive node classification over one graph with a 60/20/20 node split.
#[derive(Debug, Clone)]
pub struct NodeTask {
    spec: NetSpec,
    batch: GraphBatch,
    labels: Vec<usize>,
    pub train_nodes: Vec<usize>,
    pub valid_nodes: Vec<usize>,
    pub test_nodes: Vec<usize>,
}

impl NodeTask {
    /// Uses the graph's features, or a constant 1 per node when it has none.
    pub fn new(graph: &Graph, cfg: &RunConfig, seed: u64) -> Result<Self> {
        let (train, valid, test) = split_indices(graph.node_count(), 0.2, 0.2, seed);
        Self::with_split(graph, cfg, train, valid, test)
    }

    pub fn with_split(
        graph: &Graph,
        cfg: &RunConfig,
        train_nodes: Vec<usize>,
        valid_nodes: Vec<usize>,
        test_nodes: Vec<usize>,
    ) -> Result<Self> {
        let labels = graph
            .labels()
            .ok_or_else(|| Error::Config("node classification needs node labels".into()))?
            .to_vec();
        if train_nodes.is_empty() || valid_nodes.is_empty() || test_nodes.is_empty() {
            return Err(Error::Split(format!(
                "{} nodes are too few for a train/valid/test split",
                graph.node_count()
            )));
        }
        let features = match graph.features() {
            Some(f) => f.clone(),
            None => Tensor::full(&[graph.node_count(), 1], 1.0),
        };
        let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
        let spec = NetSpec {
            task: TaskKind::NodeClassification,
            input_dim: features.dims2()?.1,
            dim: cfg.dim,
            layers: cfg.layers,
            classes,
            dropout: cfg.dropout,
            ablations: cfg.ablation_set()?,
            entities: 0,
            relations: 0,
        };
        Ok(Self {
            spec,
            batch: GraphBatch::from_graph(graph, features)?,
            labels,
            train_nodes,
            valid_nodes,
            test_nodes,
        })
    }

    pub fn accuracy_on(&self, net: &Supernet, selection: &Selection, nodes: &[usize]) -> Result<f64> {
        let logits = net.evaluate(selection, Input::Graph(&self.batch))?;
        let pred = predict_classes(&logits)?;
        let p: Vec<usize> = nodes.iter().map(|&v| pred[v]).collect();
        let t: Vec<usize> = nodes.iter().map(|&v| self.labels[v]).collect();
        accuracy(&p, &t)
    }
}

impl Objective for NodeTask {
    fn train_len(&self) -> usize {
        self.train_nodes.len()
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
        let logits = net.forward(tape, bound, choices, Input::Graph(&self.batch), Some(dropout))?;
        let nodes: Vec<usize> = idx.iter().map(|&i| self.train_nodes[i]).collect();
        let rows = tape.gather_rows(logits, &nodes)?;
        let y: Vec<usize> = nodes.iter().map(|&v| self.labels[v]).collect();
        tape.cross_entropy(rows, &y)
    }

    fn validate(&self, net: &Supernet, selection: &Selection) -> Result<f64> {
        self.accuracy_on(net, selection, &self.valid_nodes)
    }
}

impl Task for NodeTask {
    fn kind(&self) -> TaskKind {
        TaskKind::NodeClassification
    }

    fn net_spec(&self) -> NetSpec {
        self.spec.clone()
    }

    fn metrics(&self, net: &Supernet, split: EvalSplit) -> Result<BTreeMap<String, f64>> {
        let nodes = match split {
            EvalSplit::Valid => &self.valid_nodes,
            EvalSplit::Test => &self.test_nodes,
        };
        let acc = self.accuracy_on(net, &fixed_selection(net)?, nodes)?;
        Ok(BTreeMap::from([("accuracy".to_string(), acc)]))
    }
}
