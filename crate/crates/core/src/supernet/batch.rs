use crate::error::{Error, Result};
use crate::graph::{EnclosingSubgraph, Graph};
use crate::tensor::Tensor;

/// Disjoint union of one or more graphs, ready for message passing.
///
/// Messages are stored directed (`src -> dst`, both directions per undirected
/// edge) and sorted by `(dst, src)`, so aggregation order does not depend on
/// the order edges were supplied in.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub node_count: usize,
    pub features: Tensor,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// Graph id of every node.
    pub graph_index: Vec<usize>,
    pub graph_count: usize,
    /// Target pairs (batch node indices) for link prediction; empty otherwise.
    pub pairs: Vec<(usize, usize)>,
}

impl GraphBatch {
    pub fn new(
        features: Tensor,
        edges: &[(usize, usize)],
        graph_index: Vec<usize>,
        pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let (node_count, _) = features.dims2()?;
        if features.rank() != 2 || graph_index.len() != node_count {
            return Err(Error::Dimension(format!(
                "features {:?} with {} graph ids",
                features.shape(),
                graph_index.len()
            )));
        }
        let graph_count = graph_index.iter().max().map_or(0, |g| g + 1);
        let mut msgs = Vec::with_capacity(2 * edges.len());
        for &(a, b) in edges {
            if a >= node_count || b >= node_count || a == b {
                return Err(Error::Contract(format!("edge ({a}, {b}) in {node_count}-node batch")));
            }
            msgs.push((b, a));
            msgs.push((a, b));
        }
        msgs.sort_unstable();
        msgs.dedup();
        for &(u, v) in &pairs {
            if u >= node_count || v >= node_count || u == v {
                return Err(Error::Contract(format!("pair ({u}, {v}) in {node_count}-node batch")));
            }
        }
        Ok(Self {
            node_count,
            features,
            dst: msgs.iter().map(|m| m.0).collect(),
            src: msgs.iter().map(|m| m.1).collect(),
            graph_index,
            graph_count,
            pairs,
        })
    }

    /// Whole graph as a single batch (node classification).
    pub fn from_graph(graph: &Graph, features: Tensor) -> Result<Self> {
        Self::new(features, graph.edges(), vec![0; graph.node_count()], Vec::new())
    }

    /// Several graphs with their node features (graph classification).
    pub fn from_graphs(items: &[(&Graph, &Tensor)]) -> Result<Self> {
        let mut edges = Vec::new();
        let mut graph_index = Vec::new();
        let mut feats = Vec::new();
        let mut offset = 0;
        let width = items
            .first()
            .ok_or_else(|| Error::Contract("empty graph batch".into()))?
            .1
            .dims2()?
            .1;
        for (g, (graph, f)) in items.iter().enumerate() {
            let (n, w) = f.dims2()?;
            if n != graph.node_count() || w != width {
                return Err(Error::Dimension(format!(
                    "graph {g}: features {:?} for {} nodes",
                    f.shape(),
                    graph.node_count()
                )));
            }
            edges.extend(graph.edges().iter().map(|&(a, b)| (a + offset, b + offset)));
            graph_index.extend(std::iter::repeat_n(g, n));
            feats.extend_from_slice(f.data());
            offset += n;
        }
        Self::new(Tensor::matrix(offset, width, feats)?, &edges, graph_index, Vec::new())
    }

    /// Enclosing subgraphs with their node features (link prediction).
    pub fn from_subgraphs(items: &[(&EnclosingSubgraph, &Tensor)]) -> Result<Self> {
        let mut edges = Vec::new();
        let mut graph_index = Vec::new();
        let mut pairs = Vec::with_capacity(items.len());
        let mut feats = Vec::new();
        let mut offset = 0;
        let width = items
            .first()
            .ok_or_else(|| Error::Contract("empty subgraph batch".into()))?
            .1
            .dims2()?
            .1;
        for (g, (sub, f)) in items.iter().enumerate() {
            let (n, w) = f.dims2()?;
            if n != sub.node_count() || w != width {
                return Err(Error::Dimension(format!(
                    "subgraph {g}: features {:?} for {} nodes",
                    f.shape(),
                    sub.node_count()
                )));
            }
            edges.extend(sub.edges.iter().map(|&(a, b)| (a + offset, b + offset)));
            graph_index.extend(std::iter::repeat_n(g, n));
            pairs.push((sub.target.0 + offset, sub.target.1 + offset));
            feats.extend_from_slice(f.data());
            offset += n;
        }
        Self::new(Tensor::matrix(offset, width, feats)?, &edges, graph_index, pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{distance_encode, extract_enclosing_subgraph};

    #[test]
    fn messages_sorted_and_symmetric() {
        let b = GraphBatch::new(Tensor::zeros(&[3, 1]), &[(2, 0), (0, 1)], vec![0; 3], vec![]).unwrap();
        assert_eq!(b.dst, vec![0, 0, 1, 2]);
        assert_eq!(b.src, vec![1, 2, 0, 0]);
    }

    #[test]
    fn subgraph_union_offsets() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let s1 = extract_enclosing_subgraph(&g, (0, 1), 1).unwrap();
        let s2 = extract_enclosing_subgraph(&g, (2, 3), 1).unwrap();
        let f1 = distance_encode(&s1, 2).unwrap();
        let f2 = distance_encode(&s2, 2).unwrap();
        let b = GraphBatch::from_subgraphs(&[(&s1, &f1), (&s2, &f2)]).unwrap();
        assert_eq!(b.node_count, s1.node_count() + s2.node_count());
        assert_eq!(b.graph_count, 2);
        let off = s1.node_count();
        assert_eq!(b.pairs[1], (s2.target.0 + off, s2.target.1 + off));
    }
}
