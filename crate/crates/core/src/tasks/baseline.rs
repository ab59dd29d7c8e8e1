use crate::error::{Error, Result};
use crate::graph::Graph;

/// `|N(u) ∩ N(v)|` for every pair, computed on `graph`.
pub fn common_neighbors(graph: &Graph, links: &[(usize, usize)]) -> Result<Vec<f64>> {
    links
        .iter()
        .map(|&(u, v)| {
            let n = graph.node_count();
            if u >= n || v >= n {
                return Err(Error::Contract(format!("pair ({u}, {v}) outside {n} nodes")));
            }
            // both adjacency lists are sorted
            let (a, b) = (graph.neighbors(u), graph.neighbors(v));
            let (mut i, mut j, mut c) = (0, 0, 0usize);
            while i < a.len() && j < b.len() {
                match a[i].cmp(&b[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        c += 1;
                        i += 1;
                        j += 1;
                    }
                }
            }
            Ok(c as f64)
        })
        .collect()
}
