use std::collections::{BTreeSet, VecDeque};

use super::{canonical, Graph};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Induced `hops`-neighbourhood of a candidate link with the link itself removed.
#[derive(Debug, Clone, PartialEq)]
pub struct EnclosingSubgraph {
    /// Local index to global node id, ascending.
    pub nodes: Vec<usize>,
    /// Local undirected edges `(a, b)` with `a < b`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Local indices of the two endpoints, in the order requested.
    pub target: (usize, usize),
}

impl EnclosingSubgraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

fn bfs_ball(graph: &Graph, src: usize, hops: usize, into: &mut BTreeSet<usize>) {
    let mut dist = vec![usize::MAX; graph.node_count()];
    let mut queue = VecDeque::from([src]);
    dist[src] = 0;
    into.insert(src);
    while let Some(x) = queue.pop_front() {
        if dist[x] == hops {
            continue;
        }
        for &y in graph.neighbors(x) {
            if dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                into.insert(y);
                queue.push_back(y);
            }
        }
    }
}

pub fn extract_enclosing_subgraph(
    graph: &Graph,
    pair: (usize, usize),
    hops: usize,
) -> Result<EnclosingSubgraph> {
    let (u, v) = pair;
    let n = graph.node_count();
    if u >= n || v >= n {
        return Err(Error::Contract(format!("pair {pair:?} outside {n} nodes")));
    }
    if u == v {
        return Err(Error::Contract(format!("pair {pair:?} is a self-loop")));
    }
    let mut set = BTreeSet::new();
    bfs_ball(graph, u, hops, &mut set);
    bfs_ball(graph, v, hops, &mut set);
    let nodes: Vec<usize> = set.into_iter().collect();
    let local = |g: usize| nodes.binary_search(&g).ok();
    let removed = canonical(u, v);

    let mut edges = Vec::new();
    for (a, &ga) in nodes.iter().enumerate() {
        for &gb in graph.neighbors(ga) {
            if gb <= ga || (ga, gb) == removed {
                continue;
            }
            if let Some(b) = local(gb) {
                edges.push((a, b));
            }
        }
    }
    edges.sort_unstable();
    let target = (local(u).unwrap(), local(v).unwrap());
    Ok(EnclosingSubgraph { nodes, edges, target })
}

fn bfs_local(adj: &[Vec<usize>], src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(x) = queue.pop_front() {
        let d = dist[x].unwrap();
        for &y in &adj[x] {
            if dist[y].is_none() {
                dist[y] = Some(d + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

/// Per-node features `[onehot(min(d(w,u), dmax)) ‖ onehot(min(d(w,v), dmax))]`
/// with distances taken inside the subgraph; unreachable nodes map to `dmax`.
/// Output shape `[nodes, 2 * (dmax + 1)]`.
pub fn distance_encode(sub: &EnclosingSubgraph, dmax: usize) -> Result<Tensor> {
    if dmax == 0 {
        return Err(Error::Contract("dmax must be at least 1".into()));
    }
    let adj = sub.adjacency();
    let du = bfs_local(&adj, sub.target.0);
    let dv = bfs_local(&adj, sub.target.1);
    let width = dmax + 1;
    let n = sub.node_count();
    let mut out = Tensor::zeros(&[n, 2 * width]);
    let data = out.data_mut();
    for w in 0..n {
        let a = du[w].map_or(dmax, |d| d.min(dmax));
        let b = dv[w].map_or(dmax, |d| d.min(dmax));
        data[w * 2 * width + a] = 1.0;
        data[w * 2 * width + width + b] = 1.0;
    }
    Ok(out)
}
