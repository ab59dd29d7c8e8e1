use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{canonical, Graph};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Positive and negative pairs for training, validation and testing.
/// Negatives are non-edges of the full graph, disjoint across partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSplit {
    pub train_pos: Vec<(usize, usize)>,
    pub valid_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub train_neg: Vec<(usize, usize)>,
    pub valid_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

impl LinkSplit {
    /// The graph message passing is allowed to see: training positives only.
    pub fn training_graph(&self, full: &Graph) -> Result<Graph> {
        full.with_edge_subset(&self.train_pos)
    }
}

/// Partitions edges by `ratios` (train, valid, test) and draws an equal number
/// of negatives per partition. Deterministic given `seed`.
pub fn split_links(graph: &Graph, ratios: (f64, f64, f64), seed: u64) -> Result<LinkSplit> {
    let (rt, rv, rs) = ratios;
    if [rt, rv, rs].iter().any(|r| !(0.0..=1.0).contains(r)) || (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("split ratios {ratios:?} must sum to 1")));
    }
    let m = graph.edge_count();
    if m < 10 {
        return Err(Error::Split(format!("graph has {m} edges, at least 10 required")));
    }
    let mut rng = stream(seed, Stream::Split);
    let mut edges = graph.edges().to_vec();
    edges.shuffle(&mut rng);
    let n_valid = (rv * m as f64).round() as usize;
    let n_test = (rs * m as f64).round() as usize;
    if n_valid + n_test >= m {
        return Err(Error::Split(format!("no training edges left out of {m}")));
    }
    let test_pos = edges.split_off(m - n_test);
    let valid_pos = edges.split_off(m - n_test - n_valid);
    let train_pos = edges;

    let total = train_pos.len() + valid_pos.len() + test_pos.len();
    let mut negs = sample_negative_links_with(graph, total, &HashSet::new(), &mut rng)
        .map_err(|e| Error::Split(format!("cannot draw {total} negatives: {e}")))?;
    let test_neg = negs.split_off(total - test_pos.len());
    let valid_neg = negs.split_off(train_pos.len());
    let train_neg = negs;
    Ok(LinkSplit {
        train_pos,
        valid_pos,
        test_pos,
        train_neg,
        valid_neg,
        test_neg,
    })
}

/// Uniform sample without replacement of `count` non-edges not in `exclude`.
pub fn sample_negative_links(
    graph: &Graph,
    count: usize,
    seed: u64,
    exclude: &HashSet<(usize, usize)>,
) -> Result<Vec<(usize, usize)>> {
    let mut rng = stream(seed, Stream::Sampling);
    sample_negative_links_with(graph, count, exclude, &mut rng)
}

/// As [`sample_negative_links`], drawing from a caller-owned generator.
/// `exclude` pairs are compared in canonical (smaller id first) form.
pub fn sample_negative_links_with(
    graph: &Graph,
    count: usize,
    exclude: &HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    let n = graph.node_count();
    let pairs = n * n.saturating_sub(1) / 2;
    let blocked: HashSet<(usize, usize)> = exclude
        .iter()
        .map(|&(u, v)| canonical(u, v))
        .filter(|&(u, v)| u != v && v < n && !graph.has_edge(u, v))
        .collect();
    let available = pairs - graph.edge_count() - blocked.len();
    if count > available {
        return Err(Error::Sampling(format!(
            "requested {count} negatives, only {available} non-edges available"
        )));
    }
    let eligible = |p: (usize, usize)| !graph.has_edge(p.0, p.1) && !blocked.contains(&p);

    if 2 * count > available {
        // Dense request: enumerate and take a prefix of a shuffle.
        let mut all = Vec::with_capacity(available);
        for u in 0..n {
            for v in u + 1..n {
                if eligible((u, v)) {
                    all.push((u, v));
                }
            }
        }
        let (picked, _) = all.partial_shuffle(rng, count);
        return Ok(picked.to_vec());
    }

    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let p = canonical(u, v);
        if eligible(p) && seen.insert(p) {
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }

    #[test]
    fn hundred_edges_split_80_10_10() {
        let g = ring(100);
        let s = split_links(&g, (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!((s.train_pos.len(), s.valid_pos.len(), s.test_pos.len()), (80, 10, 10));
        assert_eq!((s.train_neg.len(), s.valid_neg.len(), s.test_neg.len()), (80, 10, 10));
        let tg = s.training_graph(&g).unwrap();
        assert_eq!(tg.edge_count(), 80);
        for &(u, v) in s.valid_pos.iter().chain(&s.test_pos) {
            assert!(!tg.has_edge(u, v));
        }
    }

    #[test]
    fn complete_graph_cannot_supply_negatives() {
        let k5 = Graph::from_edges(5, (0..5).flat_map(|u| (u + 1..5).map(move |v| (u, v)))).unwrap();
        assert!(matches!(split_links(&k5, (0.8, 0.1, 0.1), 0), Err(Error::Split(_))));
    }

    #[test]
    fn too_few_edges() {
        assert!(matches!(split_links(&ring(5), (0.8, 0.1, 0.1), 0), Err(Error::Split(_))));
    }

    #[test]
    fn split_is_deterministic() {
        let g = ring(60);
        assert_eq!(split_links(&g, (0.8, 0.1, 0.1), 9).unwrap(), split_links(&g, (0.8, 0.1, 0.1), 9).unwrap());
        assert_ne!(split_links(&g, (0.8, 0.1, 0.1), 9).unwrap(), split_links(&g, (0.8, 0.1, 0.1), 10).unwrap());
    }

    #[test]
    fn negatives_respect_exclusion_and_capacity() {
        let g = ring(6);
        let exclude: HashSet<_> = [(0, 2), (3, 1)].into_iter().collect();
        // 15 pairs - 6 edges - 2 excluded
        let all = sample_negative_links(&g, 7, 1, &exclude).unwrap();
        assert_eq!(all.len(), 7);
        assert!(all.iter().all(|&(u, v)| !g.has_edge(u, v) && (u, v) != (0, 2) && (u, v) != (1, 3)));
        assert!(matches!(sample_negative_links(&g, 8, 1, &exclude), Err(Error::Sampling(_))));
    }
}
