use std::collections::HashSet;

use linknas::graph::{
    canonical, distance_encode, extract_enclosing_subgraph, sample_negative_links, split_links,
    Graph,
};
use proptest::prelude::*;

fn arb_graph(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (3..=max_nodes).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 1..(3 * n)).prop_map(move |edges| {
            let g = Graph::from_edges(n, edges).unwrap();
            if g.edge_count() == 0 {
                Graph::from_edges(n, [(0, 1)]).unwrap()
            } else {
                g
            }
        })
    })
}

/// All-pairs shortest paths by Floyd–Warshall over a local edge list.
fn floyd(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<usize>>> {
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for &(a, b) in edges {
        d[a][b] = Some(1);
        d[b][a] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(x), Some(y)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| x + y < c) {
                        d[i][j] = Some(x + y);
                    }
                }
            }
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn distance_encoding_matches_floyd(g in arb_graph(50), hops in 1usize..3, dmax in 1usize..5, pick in any::<prop::sample::Index>()) {
        let e = g.edges()[pick.index(g.edge_count())];
        let sub = extract_enclosing_subgraph(&g, e, hops).unwrap();
        let de = distance_encode(&sub, dmax).unwrap();
        let d = floyd(sub.node_count(), &sub.edges);
        let w = dmax + 1;
        for node in 0..sub.node_count() {
            let a = d[sub.target.0][node].map_or(dmax, |x| x.min(dmax));
            let b = d[sub.target.1][node].map_or(dmax, |x| x.min(dmax));
            let row = de.row(node);
            prop_assert_eq!(row.iter().sum::<f64>(), 2.0);
            prop_assert_eq!(row[a], 1.0);
            prop_assert_eq!(row[w + b], 1.0);
        }
    }

    #[test]
    fn subgraph_invariants(g in arb_graph(40), hops in 1usize..3, pick in any::<prop::sample::Index>()) {
        let (u, v) = g.edges()[pick.index(g.edge_count())];
        let sub = extract_enclosing_subgraph(&g, (u, v), hops).unwrap();
        prop_assert!(sub.nodes.windows(2).all(|w| w[0] < w[1]));
        let (lu, lv) = sub.target;
        prop_assert!(!sub.edges.contains(&canonical(lu, lv)));
        // every local edge is a global edge
        for &(a, b) in &sub.edges {
            prop_assert!(g.has_edge(sub.nodes[a], sub.nodes[b]));
        }
        // the target edge plays no part in the node set
        let without: Vec<_> = g.edges().iter().copied().filter(|&p| p != (u, v)).collect();
        let g2 = Graph::from_edges(g.node_count(), without).unwrap();
        let sub2 = extract_enclosing_subgraph(&g2, (u, v), hops).unwrap();
        prop_assert_eq!(&sub.nodes, &sub2.nodes);
        prop_assert_eq!(&sub.edges, &sub2.edges);
    }

    #[test]
    fn split_partitions_edges(n in 12usize..40, extra in 0usize..40, seed in any::<u64>()) {
        let mut edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        edges.extend((0..extra).map(|i| (i % n, (i * 7 + 3) % n)));
        let g = Graph::from_edges(n, edges).unwrap();
        let s = split_links(&g, (0.8, 0.1, 0.1), seed).unwrap();
        let mut pos: Vec<_> = s.train_pos.iter().chain(&s.valid_pos).chain(&s.test_pos).copied().collect();
        pos.sort_unstable();
        prop_assert_eq!(&pos, &g.edges().to_vec());
        let negs: Vec<_> = s.train_neg.iter().chain(&s.valid_neg).chain(&s.test_neg).copied().collect();
        let uniq: HashSet<_> = negs.iter().copied().collect();
        prop_assert_eq!(uniq.len(), negs.len());
        prop_assert!(negs.iter().all(|&(a, b)| a != b && !g.has_edge(a, b)));
        prop_assert_eq!(s.train_neg.len(), s.train_pos.len());
        prop_assert_eq!(s.valid_neg.len(), s.valid_pos.len());
        prop_assert_eq!(s.test_neg.len(), s.test_pos.len());
    }
}

#[test]
fn negative_sampling_is_uniform() {
    // 10 nodes, 35 edges -> 10 non-edges, each drawn with probability 0.1
    let mut edges = Vec::new();
    for u in 0..10 {
        for v in u + 1..10 {
            if (u + v) % 4 != 1 || u > 5 {
                edges.push((u, v));
            }
        }
    }
    let g = Graph::from_edges(10, edges).unwrap();
    let non_edges = 45 - g.edge_count();
    let draws = 100_000;
    let mut counts = std::collections::HashMap::new();
    for seed in 0..draws {
        let p = sample_negative_links(&g, 1, seed, &HashSet::new()).unwrap()[0];
        *counts.entry(p).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), non_edges);
    let expected = 1.0 / non_edges as f64;
    for (p, c) in counts {
        let f = c as f64 / draws as f64;
        assert!((f - expected).abs() <= 0.02, "{p:?}: {f} vs {expected}");
    }
}
