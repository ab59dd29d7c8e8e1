use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use super::metrics::accuracy;
use super::{fixed_selection, predict_classes, split_indices, EvalSplit, Task};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, LabeledGraph};
use crate::search::Objective;
use crate::supernet::{Bound, Choice, GraphBatch, Input, NetSpec, Selection, Supernet, TaskKind};
use crate::tensor::{Tape, Tensor, Var};

/// One-hot `min(degree, cap)`, width `cap + 1`.
pub fn degree_features(graph: &Graph, cap: usize) -> Tensor {
    let w = cap + 1;
    let mut t = Tensor::zeros(&[graph.node_count(), w]);
    for v in 0..graph.node_count() {
        t.data_mut()[v * w + graph.degree(v).min(cap)] = 1.0;
    }
    t
}

/// Graph classification with an 80/10/10 split over graphs.
#[derive(Debug, Clone)]
pub struct GraphTask {
    spec: NetSpec,
    graphs: Vec<Graph>,
    features: Vec<Tensor>,
    labels: Vec<usize>,
    pub train_ids: Vec<usize>,
    pub valid_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    eval_batch: usize,
}

impl GraphTask {
    /// Node features come from the dataset when every graph has them,
    /// otherwise one-hot degrees capped at `cfg.max_degree`.
    pub fn new(graphs: &[LabeledGraph], cfg: &RunConfig, seed: u64) -> Result<Self> {
        if graphs.len() < 2 {
            return Err(Error::Split(format!("{} graph(s) cannot be split", graphs.len())));
        }
        let (train, valid, test) = split_indices(graphs.len(), 0.1, 0.1, seed);
        Self::with_split(graphs, cfg, train, valid, test)
    }

    pub fn with_split(
        graphs: &[LabeledGraph],
        cfg: &RunConfig,
        train_ids: Vec<usize>,
        valid_ids: Vec<usize>,
        test_ids: Vec<usize>,
    ) -> Result<Self> {
        if train_ids.is_empty() || valid_ids.is_empty() || test_ids.is_empty() {
            return Err(Error::Split(format!(
                "{} graphs are too few for a train/valid/test split",
                graphs.len()
            )));
        }
        let own = graphs.iter().all(|g| g.graph.features().is_some());
        let features: Vec<Tensor> = graphs
            .iter()
            .map(|g| match (own, g.graph.features()) {
                (true, Some(f)) => f.clone(),
                _ => degree_features(&g.graph, cfg.max_degree),
            })
            .collect();
        let input_dim = features[0].dims2()?.1;
        if features.iter().any(|f| f.shape()[1] != input_dim) {
            return Err(Error::Dimension("graphs disagree on feature width".into()));
        }
        let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
        let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
        let spec = NetSpec {
            task: TaskKind::GraphClassification,
            input_dim,
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
            graphs: graphs.iter().map(|g| g.graph.clone()).collect(),
            features,
            labels,
            train_ids,
            valid_ids,
            test_ids,
            eval_batch: cfg.eval_batch,
        })
    }

    fn batch(&self, ids: &[usize]) -> Result<GraphBatch> {
        let items: Vec<_> = ids.iter().map(|&i| (&self.graphs[i], &self.features[i])).collect();
        GraphBatch::from_graphs(&items)
    }

    pub fn accuracy_on(&self, net: &Supernet, selection: &Selection, ids: &[usize]) -> Result<f64> {
        let mut pred = Vec::with_capacity(ids.len());
        for chunk in ids.chunks(self.eval_batch) {
            let logits = net.evaluate(selection, Input::Graph(&self.batch(chunk)?))?;
            pred.extend(predict_classes(&logits)?);
        }
        let truth: Vec<usize> = ids.iter().map(|&i| self.labels[i]).collect();
        accuracy(&pred, &truth)
    }
}

impl Objective for GraphTask {
    fn train_len(&self) -> usize {
        self.train_ids.len()
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
        let ids: Vec<usize> = idx.iter().map(|&i| self.train_ids[i]).collect();
        let b = self.batch(&ids)?;
        let logits = net.forward(tape, bound, choices, Input::Graph(&b), Some(dropout))?;
        let y: Vec<usize> = ids.iter().map(|&i| self.labels[i]).collect();
        tape.cross_entropy(logits, &y)
    }

    fn validate(&self, net: &Supernet, selection: &Selection) -> Result<f64> {
        self.accuracy_on(net, selection, &self.valid_ids)
    }
}

impl Task for GraphTask {
    fn kind(&self) -> TaskKind {
        TaskKind::GraphClassification
    }

    fn net_spec(&self) -> NetSpec {
        self.spec.clone()
    }

    fn metrics(&self, net: &Supernet, split: EvalSplit) -> Result<BTreeMap<String, f64>> {
        let ids = match split {
            EvalSplit::Valid => &self.valid_ids,
            EvalSplit::Test => &self.test_ids,
        };
        let acc = self.accuracy_on(net, &fixed_selection(net)?, ids)?;
        Ok(BTreeMap::from([("accuracy".to_string(), acc)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_graph_is_split_error() {
        let g = LabeledGraph {
            graph: Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap(),
            label: 0,
        };
        let cfg = RunConfig::defaults(TaskKind::GraphClassification, "one").unwrap();
        assert!(matches!(GraphTask::new(&[g], &cfg, 0), Err(Error::Split(_))));
    }

    #[test]
    fn degree_one_hot_is_capped() {
        let star = Graph::from_edges(6, (1..6).map(|i| (0, i))).unwrap();
        let f = degree_features(&star, 3);
        assert_eq!(f.shape(), &[6, 4]);
        assert_eq!(f.row(0), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(f.row(1), &[0.0, 1.0, 0.0, 0.0]);
    }
}
