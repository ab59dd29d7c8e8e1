//! Graph containers, ingestion, link splits and enclosing-subgraph extraction.

mod io;
mod split;
mod subgraph;

pub use io::{
    load_edge_list, load_kg_dataset, load_node_features, load_node_labels, load_triples,
    load_tu_dataset, KgDataset, LabeledGraph, Vocabulary,
};
pub use split::{sample_negative_links, sample_negative_links_with, split_links, LinkSplit};
pub use subgraph::{distance_encode, extract_enclosing_subgraph, EnclosingSubgraph};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Canonical undirected pair with the smaller id first.
pub fn canonical(u: usize, v: usize) -> (usize, usize) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Undirected simple graph. Edges are stored once as `(u, v)` with `u < v`,
/// sorted; adjacency lists are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    features: Option<Tensor>,
    labels: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a graph, dropping self-loops (with a warning) and duplicate edges.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut list = Vec::new();
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::Contract(format!(
                    "edge ({u}, {v}) outside {node_count} nodes"
                )));
            }
            if u == v {
                log::warn!("skipping self-loop on node {u}");
                continue;
            }
            list.push(canonical(u, v));
        }
        list.sort_unstable();
        list.dedup();
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in &list {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges: list,
            adjacency,
            features: None,
            labels: None,
        })
    }

    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        let (rows, _) = features.dims2()?;
        if features.rank() != 2 || rows != self.node_count {
            return Err(Error::Dimension(format!(
                "feature matrix {:?} for {} nodes",
                features.shape(),
                self.node_count
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.node_count {
            return Err(Error::Dimension(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.node_count
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.node_count && self.adjacency[u].binary_search(&v).is_ok()
    }

    pub fn features(&self) -> Option<&Tensor> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Same node set (and attributes) keeping only `edges`.
    pub fn with_edge_subset(&self, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::from_edges(self.node_count, edges.iter().copied())?;
        g.features = self.features.clone();
        g.labels = self.labels.clone();
        Ok(g)
    }
}

/// Direction tag of an augmented multi-relational edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeDirection {
    SelfLoop,
    Original,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

/// A message-passing edge `head -> tail` over an augmented relation id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentedTriple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub direction: EdgeDirection,
}

/// Directed multi-relational graph with inverse and self-loop augmentation.
///
/// Augmented relation ids: originals keep `r`, inverses use `r + R`, and the
/// single self-loop relation is `2R`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelGraph {
    entity_count: usize,
    relation_count: usize,
    triples: Vec<Triple>,
    augmented: Vec<AugmentedTriple>,
}

impl RelGraph {
    pub fn new(entity_count: usize, relation_count: usize, triples: Vec<Triple>) -> Result<Self> {
        for t in &triples {
            if t.head >= entity_count || t.tail >= entity_count {
                return Err(Error::Contract(format!(
                    "triple {t:?} outside {entity_count} entities"
                )));
            }
            if t.relation >= relation_count {
                return Err(Error::Contract(format!(
                    "triple {t:?} outside {relation_count} relations"
                )));
            }
        }
        let mut augmented = Vec::with_capacity(2 * triples.len() + entity_count);
        for t in &triples {
            augmented.push(AugmentedTriple {
                head: t.head,
                relation: t.relation,
                tail: t.tail,
                direction: EdgeDirection::Original,
            });
        }
        for t in &triples {
            augmented.push(AugmentedTriple {
                head: t.tail,
                relation: t.relation + relation_count,
                tail: t.head,
                direction: EdgeDirection::Inverse,
            });
        }
        for e in 0..entity_count {
            augmented.push(AugmentedTriple {
                head: e,
                relation: 2 * relation_count,
                tail: e,
                direction: EdgeDirection::SelfLoop,
            });
        }
        Ok(Self {
            entity_count,
            relation_count,
            triples,
            augmented,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    /// Rows of the edge-embedding table: originals, inverses and the self-loop.
    pub fn augmented_relation_count(&self) -> usize {
        2 * self.relation_count + 1
    }

    pub fn self_loop_relation(&self) -> usize {
        2 * self.relation_count
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn augmented(&self) -> &[AugmentedTriple] {
        &self.augmented
    }
}
